import math

import numpy as np


def assert_equal(thing1, thing2, *args):
    if thing1 != thing2 or any(thing1 != arg for arg in args):
        raise AssertionError(
            "not(%s)" % " == ".join(str(arg) for arg in (thing1, thing2) + args)
        )


def assert_ne(thing1, thing2):
    if thing1 == thing2:
        raise AssertionError("not(%s != %s)" % (str(thing1), str(thing2)))


def assert_greater_than(thing1, thing2):
    if thing1 <= thing2:
        raise AssertionError("%s <= %s" % (str(thing1), str(thing2)))


def assert_greater_than_or_equal(thing1, thing2):
    if thing1 < thing2:
        raise AssertionError("%s < %s" % (str(thing1), str(thing2)))


def assert_close(actual, expected, rel=1e-9, abs_tol=0.0):
    """Element-wise |actual - expected| <= abs_tol + rel * |expected|."""
    a = np.asarray(actual, dtype=float)
    e = np.asarray(expected, dtype=float)
    if a.shape != e.shape:
        raise AssertionError("shape %s != %s" % (a.shape, e.shape))
    bad = np.abs(a - e) > abs_tol + rel * np.abs(e)
    if np.any(bad):
        i = np.argwhere(bad)[0] if a.ndim else ()
        raise AssertionError(
            "%r not close to %r (rel %g, abs %g) at %s"
            % (a[tuple(i)], e[tuple(i)], rel, abs_tol, tuple(int(k) for k in i))
        )


def assert_raises(exc_type, fn, *args, **kwargs):
    """Call fn and return the raised exception, which must be an exc_type."""
    try:
        fn(*args, **kwargs)
    except exc_type as e:
        return e
    raise AssertionError("%s did not raise %s" % (getattr(fn, "__name__", fn), exc_type.__name__))


def assert_finite(value):
    if not math.isfinite(value):
        raise AssertionError("%r is not finite" % value)
