# Equivalent rewrite: the isinstance conjuncts are reordered, which cannot
# change behavior. No test suite can tell this variant from the reference.
def any_int(x, y, z):
    if isinstance(z, int) and isinstance(y, int) and isinstance(x, int):
        if (x + y == z) or (x + z == y) or (y + z == x):
            return True
        return False
    return False
