# Services package - numerical services and the experiment driver
