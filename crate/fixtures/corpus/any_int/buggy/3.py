# Seeded fault: the middle disjunct (x + z == y) is missing.
def any_int(x, y, z):
    if isinstance(x, int) and isinstance(y, int) and isinstance(z, int):
        if (x + y == z) or (y + z == x):
            return True
        return False
    return False
