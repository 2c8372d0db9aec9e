"""Linear regression that reads only a few attributes of each training example."""
