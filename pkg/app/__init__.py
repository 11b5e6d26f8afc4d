# empty package marker

