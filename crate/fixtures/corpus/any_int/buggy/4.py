# Seeded fault: the first disjunct (x + y == z) is missing.
def any_int(x, y, z):
    if isinstance(x, int) and isinstance(y, int) and isinstance(z, int):
        if (x + z == y) or (y + z == x):
            return True
        return False
    return False
