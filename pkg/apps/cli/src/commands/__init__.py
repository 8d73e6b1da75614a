# Empty - use full path imports
