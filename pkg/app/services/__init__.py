# services package

