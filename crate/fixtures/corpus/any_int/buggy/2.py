# Seeded fault: the integer gate is missing, so float inputs whose sum
# matches are wrongly accepted.
def any_int(x, y, z):
    if (x + y == z) or (x + z == y) or (y + z == x):
        return True
    return False
