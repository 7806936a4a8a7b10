# Utils package for the string-averaging projection toolkit
