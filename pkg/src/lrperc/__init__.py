"""Monte Carlo toolkit for long-range percolation on finite boxes of Z^d.

Edges {x, y} open independently with probability 1 - exp(-beta * J(x - y));
all randomness is a pure function of (seed, stream, edge), so configurations
regenerate bit-exactly and couple monotonely across beta.
"""

__version__ = "0.1.0"
