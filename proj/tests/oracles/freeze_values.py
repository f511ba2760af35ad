"""Independent oracles for the frozen expected values used in the C++ tests.

Run with: python3 tests/oracles/freeze_values.py
Nothing here imports the C++ code; every number is computed by brute force,
enumeration, quadrature, or high-precision arithmetic.
"""
import numpy as np
import mpmath as mp
from scipy import integrate, optimize, stats

mp.mp.dps = 50


def grid_project(v, ps, step=1e-4):
    # k=2 only: W is the segment {w >= 0, ps.w = 1}
    best = None
    for w0 in np.arange(0.0, 1.0 / ps[0] + step / 2, step):
        w1 = (1.0 - ps[0] * w0) / ps[1]
        if w1 < -1e-12:
            continue
        d = (v[0] - w0) ** 2 + (v[1] - w1) ** 2
        if best is None or d < best[0]:
            best = (d, w0, w1)
    return best[1:]


print("projection [3,1] ->", grid_project([3, 1], [0.5, 0.5]))
print("projection [-1,-1] ->", grid_project([-1, -1], [0.5, 0.5]))

# MLLS two-class table: 0.7 at [0.8,0.2], 0.3 at [0.2,0.8], ps uniform
w0 = np.arange(0.0, 2.0 + 5e-7, 1e-6)
obj = 0.7 * np.log(0.8 * w0 + 0.2 * (2 - w0)) + 0.3 * np.log(0.2 * w0 + 0.8 * (2 - w0))
i = np.argmax(obj)
print("mlls two-class grid w0 =", w0[i], "w1 =", 2 - w0[i])

# Six-point counterexample
F = np.array([[.1, .2, .7], [.1, .7, .2], [.2, .1, .7], [.2, .7, .1], [.7, .1, .2], [.7, .2, .1]])
P = np.array([[.2, .1, .7], [0, .8, .2], [.1, .2, .7], [.3, .6, .1], [.8, 0, .2], [.6, .3, .1]])
pt_y = np.array([0.8, 0.1, 0.1])
pt_x = 0.5 * P @ pt_y
print("pt_x", pt_x, pt_x.sum())


def negll(w12):
    w = np.array([w12[0], w12[1], 3 - w12[0] - w12[1]])
    return -np.sum(pt_x * np.log(F @ w))


res = optimize.minimize(negll, [1, 1], method="Nelder-Mead", options=dict(xatol=1e-12, fatol=1e-15, maxiter=20000))
wf = np.array([res.x[0], res.x[1], 3 - res.x.sum()])
print("w_f =", wf)
wf_mp = [mp.mpf(x) for x in wf]
ll = mp.fsum(mp.mpf(pt_x[i]) * mp.log(mp.fsum(mp.mpf(F[i, j]) * wf_mp[j] for j in range(3))) for i in range(6))
print("loglik at w_f (50 digits) =", ll)
# calibration error of the six-point predictor
print("E(f) =", np.sqrt(np.mean(np.sum((F - P) ** 2, axis=1))))
M = (F.T @ F) / 6.0
print("E[ff^T] eigenvalues", np.linalg.eigvalsh(M))

# RLLS lambda=1 grid
C = np.array([[0.4, 0.1], [0.1, 0.4]])
mu = np.array([0.35, 0.65])
best = None
for a in np.arange(0.0, 2.0 + 5e-5, 1e-4):
    w = np.array([a, 2 - a])
    val = np.sum((C @ w - mu) ** 2) + np.sum((w - 1) ** 2)
    if best is None or val < best[0]:
        best = (val, a)
print("rlls lambda=1 w0 =", best[1], "w1 =", 2 - best[1])

# Threshold example at alpha=.25, c=.7, mu=1
Phi = stats.norm.cdf(1.0)
alpha, c = 0.25, 0.7
ptle0 = alpha * (1 - Phi) + (1 - alpha) * Phi
w0 = (2 * ptle0 - 2 * c) / (1 - 2 * c)
print("Phi(1) =", repr(Phi), "example1 err (w0 route) =", 2 * abs(w0 - 2 * alpha),
      "(formula) =", 4 * abs((1 - 2 * alpha) * (Phi - c) / (1 - 2 * c)))
for a in (0.1, 0.25, 0.4):
    for cc in (0.2, 0.3, 0.7, 0.8):
        p = a * (1 - Phi) + (1 - a) * Phi
        print(f"  alpha={a} c={cc} unconstrained w0={(2*p-2*cc)/(1-2*cc):.6f}")

# GMM posterior at x=1
phi = lambda x: np.exp(-x * x / 2) / np.sqrt(2 * np.pi)
print("gmm x=1:", 0.5 * phi(0) / (0.5 * phi(0) + 0.5 * phi(2)))

# Binned GMM population joint, 8 equal-width bins on f_0 = sigmoid(2x), mu=1, ps uniform
edges = np.linspace(0, 1, 9)
def x_of(b):
    if b <= 0: return -np.inf
    if b >= 1: return np.inf
    return np.log(b / (1 - b)) / 2.0
J = np.zeros((8, 2))
for z in range(8):
    lo, hi = x_of(edges[z]), x_of(edges[z + 1])
    for y, m in ((0, 1.0), (1, -1.0)):
        J[z, y] = 0.5 * integrate.quad(lambda x: phi(x - m), lo, hi, epsabs=1e-14, epsrel=1e-14)[0]
print("binned joint column sums", J.sum(axis=0))
print("binned joint:\n", repr(J))
