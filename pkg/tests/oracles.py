"""Independent arbitrary-precision reference values.

Everything here is written against mpmath only, so a bug shared with the
package's float code cannot cancel out.
"""
import mpmath as mp

mp.mp.dps = 50


def sigmoid(z):
    return 1 / (1 + mp.exp(-mp.mpf(z)))


def dsigmoid(z):
    s = sigmoid(z)
    return s * (1 - s)


def softplus(z):
    return mp.log(1 + mp.exp(mp.mpf(z)))


def kl_bernoulli(p, q):
    p, q = mp.mpf(p), mp.mpf(q)
    return p * mp.log(p / q) + (1 - p) * mp.log((1 - p) / (1 - q))


def kl_categorical(p, q):
    return mp.fsum(mp.mpf(a) * mp.log(mp.mpf(a) / mp.mpf(b)) for a, b in zip(p, q))


def bregman_logpartition(z1, z2):
    z1, z2 = mp.mpf(z1), mp.mpf(z2)
    return softplus(z1) - softplus(z2) - sigmoid(z2) * (z1 - z2)


def radius_logistic(d, S, t, delta):
    d, S, t, delta = (mp.mpf(v) for v in (d, S, t, delta))
    return 10 * d * mp.log(S * t / (4 * d) + mp.e) + 2 * ((mp.e - 2) + S) * mp.log(1 / delta)


def radius_mnl(d, K, S, t, delta):
    d, K, S, t, delta = (mp.mpf(v) for v in (d, K, S, t, delta))
    kp = K + 1
    return (5 * d * kp * mp.log(mp.e + S * t / (d * kp))
            + 2 * ((mp.e - 2) + mp.sqrt(6 * K) * S) * mp.log(1 / delta))


def gamma_mnl(d, K, S, t, delta, c=1):
    d, K, S, t, delta = (mp.mpf(v) for v in (d, K, S, t, delta))
    return mp.sqrt(c * (d * K * S * mp.log(mp.e + S * t / (d * K)) + mp.sqrt(K) * S * mp.log(1 / delta)))


def segment_integral(z1, z2):
    """``int_0^1 (1 - v) mu'(z1 + v (z2 - z1)) dv`` by adaptive quadrature."""
    z1, z2 = mp.mpf(z1), mp.mpf(z2)
    return mp.quad(lambda v: (1 - v) * dsigmoid(z1 + v * (z2 - z1)), [0, 1])


def logistic_nll(arms, rewards, theta):
    total = mp.mpf(0)
    for x, r in zip(arms, rewards):
        z = mp.fsum(mp.mpf(a) * mp.mpf(b) for a, b in zip(x, theta))
        total += softplus(z) - r * z
    return total
