"""Flat-file encodings: study CSV/JSON, mesh text and matrix text."""
import csv
import io
import logging
import os
from typing import List, Optional

import numpy as np

from app.core.config import settings
from app.core.errors import ParameterError
from app.models.linalg import SparseSym
from app.models.mesh import SimplicialMesh
from app.schemas.study import StudyReport, StudyRow

logger = logging.getLogger(__name__)

CSV_HEADER = "level,h,dofs,value,reference,error,scaled_error,seconds"
CSV_FIELDS = CSV_HEADER.split(",")


def format_number(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return "%.17g" % value


def report_to_csv(report: StudyReport) -> str:
    lines = [CSV_HEADER]
    for row in report.rows:
        lines.append(",".join(format_number(getattr(row, field)) for field in CSV_FIELDS))
    return "\n".join(lines) + "\n"


def rows_from_csv(text: str) -> List[StudyRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or ",".join(header) != CSV_HEADER:
        raise ParameterError(f"expected CSV header {CSV_HEADER!r}")
    rows = []
    for record in reader:
        if not record:
            continue
        values = {field: (cell if cell != "" else None) for field, cell in zip(CSV_FIELDS, record)}
        rows.append(StudyRow.model_validate(values))
    return rows


def report_to_json(report: StudyReport) -> str:
    return report.model_dump_json(indent=2)


def report_from_json(text: str) -> StudyReport:
    return StudyReport.model_validate_json(text)


def mesh_to_text(mesh: SimplicialMesh) -> str:
    """Header ``dim nv nc level domain_tag``, vertex rows, cell rows, boundary flags."""
    out = [f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells} {mesh.level} {mesh.domain_tag}"]
    out.extend(" ".join("%.17g" % c for c in vertex) for vertex in mesh.vertices)
    out.extend(" ".join(str(int(v)) for v in cell) for cell in mesh.cells)
    out.append(" ".join("1" if flag else "0" for flag in mesh.boundary_vertex))
    return "\n".join(out) + "\n"


def mesh_from_text(text: str) -> SimplicialMesh:
    lines = text.strip().splitlines()
    try:
        dim, nv, nc, level, tag = lines[0].split()
        dim, nv, nc = int(dim), int(nv), int(nc)
        vertices = np.array([[float(c) for c in line.split()] for line in lines[1:1 + nv]], dtype=float)
        cells = np.array([[int(v) for v in line.split()] for line in lines[1 + nv:1 + nv + nc]], dtype=np.int64)
        boundary = np.array([flag == "1" for flag in lines[1 + nv + nc].split()], dtype=bool)
    except (ValueError, IndexError) as exc:
        raise ParameterError(f"malformed mesh text: {exc}") from exc
    return SimplicialMesh(
        dim=dim,
        vertices=vertices.reshape(nv, dim),
        cells=cells.reshape(nc, dim + 1),
        boundary_vertex=boundary,
        level=int(level),
        domain_tag=tag,
    )


def matrix_to_text(matrix: SparseSym) -> str:
    """``n nnz`` then one ``i j value`` line per stored lower-triangle entry."""
    out = [f"{matrix.n} {matrix.nnz}"]
    out.extend(
        f"{int(i)} {int(j)} {'%.17g' % v}" for i, j, v in zip(matrix.rows, matrix.cols, matrix.vals)
    )
    return "\n".join(out) + "\n"


def write_output(text: str, path: Optional[str] = None) -> Optional[str]:
    """Write to ``path``; relative paths land under OUTPUT_DIR. Returns the written path."""
    if path is None:
        return None
    if not os.path.isabs(path) and os.path.dirname(path) == "":
        path = os.path.join(settings.OUTPUT_DIR, path)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)
    logger.info("wrote %s", path)
    return path
