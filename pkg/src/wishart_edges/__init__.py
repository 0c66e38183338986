"""Edge geometry and edge statistics of complex correlated Wishart matrices."""

__version__ = "0.1.0"
