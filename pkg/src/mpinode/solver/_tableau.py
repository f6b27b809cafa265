"""Dormand-Prince 5(4) coefficients with the Hairer 4th-order dense output."""

C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)

# A[i] holds the coefficients of stage i+1 on stages 0..i
A = (
    (),
    (1.0 / 5.0,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
)

B = (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0)

# 5th-order minus embedded 4th-order weights
E = (
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

D = (
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


def dense_weights(s):
    """Weights (w_y0, w_y1, c_1..c_7) with y(s) = w_y0*y0 + w_y1*y1 + h*sum(c_i*k_i)."""
    b1 = s * (1.0 - s)
    b2 = s * s * (1.0 - s)
    b3 = b2 * (1.0 - s)
    cdiff = s - b1 + 2.0 * b2
    c = [b3 * d for d in D]
    c[0] += b1 - b2
    c[6] -= b2
    return 1.0 - cdiff, cdiff, c
