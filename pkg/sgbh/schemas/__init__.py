# Schemas package - pydantic models for parameters, grids, arrays and reports
