def const_five():
    return 5
