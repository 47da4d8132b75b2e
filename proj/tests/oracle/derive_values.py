"""Independent numpy/scipy recomputation of the constants frozen in the unit tests."""
import itertools
import math

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq


def stationary(P):
    w, v = np.linalg.eig(P.T)
    k = np.argmin(abs(w - 1))
    m = np.real(v[:, k])
    return m / m.sum()


def capacity(P, mu, A, B):
    n = len(mu)
    free = [x for x in range(n) if x not in A and x not in B]
    h = np.zeros(n)
    for a in A:
        h[a] = 1
    if free:
        L = np.eye(n) - P
        M = L[np.ix_(free, free)]
        rhs = -L[np.ix_(free, list(A))].sum(axis=1)
        h[free] = np.linalg.solve(M, rhs)
    e = (np.eye(n) - P) @ h
    return h, sum(mu[a] * e[a] for a in A)


def energy(P, mu, f):
    n = len(mu)
    return 0.5 * sum(mu[x] * P[x, y] * (f[x] - f[y]) ** 2 for x in range(n) for y in range(n))


def cpi(P, mu):
    D = np.diag(np.sqrt(mu))
    Di = np.diag(1 / np.sqrt(mu))
    S = D @ (np.eye(len(mu)) - P) @ Di
    w = np.sort(np.linalg.eigvalsh((S + S.T) / 2))
    return 1 / w[1]


def show(name, v):
    print(f"{name:40s} {v!r}")


# two-state chain p(a,b) = 0.3, p(b,a) = 0.1
P2 = np.array([[0.7, 0.3], [0.1, 0.9]])
mu2 = stationary(P2)
show("two-state mu", mu2.tolist())
show("two-state cap", capacity(P2, mu2, [0], [1])[1])
show("two-state E((1,-1))", energy(P2, mu2, [1, -1]))
show("two-state E((2,0))", energy(P2, mu2, [2, 0]))
show("two-state C_PI", cpi(P2, mu2))
show("two-state E_a[tau_b]", 1 / 0.3)
cap = capacity(P2, mu2, [0], [1])[1]
show("C_Psi linear", mu2[0] / cap)
show("C_Psi entropy K=e^2", mu2[0] * math.log1p(math.e ** 2 / mu2[0]) / cap)
show("C_mass uniform 4", math.log1p(4 * math.e ** 2))
show("C_mass min weight 1/2", math.log1p(2 * math.e ** 2))
show("indicator ent m=.5", 0.5 * math.log1p(2 * math.e ** 2))
show("indicator ent m=1", math.log1p(math.e ** 2))

# 3-state path
P3 = np.array([[0.5, 0.5, 0], [0.25, 0.5, 0.25], [0, 0.5, 0.5]])
mu3 = stationary(P3)
h, c = capacity(P3, mu3, [2], [0])
show("path3 mu", mu3.tolist())
show("path3 h(1)", h[1])
show("path3 cap", c)
show("path3 cap swapped", capacity(P3, mu3, [0], [2])[1])
show("path3 escape", c / mu3[2])

# conditional expectation
nu = np.array([0.25, 0.5, 0.25])
f = np.array([0, 1, 5])
show("cond exp on {0,1}", (nu[0] * f[0] + nu[1] * f[1]) / (nu[0] + nu[1]))

# Muckenhoupt and Hardy for mu = nu = (0.5, 0.25, 0.25)
w = [0.5, 0.25, 0.25]
c2 = max(sum(1 / w[z] for z in range(x)) * sum(w[y] for y in range(x, 3)) for x in range(1, 3))
show("muckenhoupt", c2)
# hardy: f(0)=0, variables f1, f2; sum_{x>=1} nu f^2 <= C sum_{x=0}^{1} mu(x)(f(x+1)-f(x))^2
G = np.diag(w[1:])
D = np.array([[1, 0], [-1, 1]])
E = D.T @ np.diag(w[:2]) @ D
show("hardy", float(eigh(G, E, eigvals_only=True).max()))

# double well, Metropolis 1/2 min(1, e^{-beta dV})
V = [((x - 5) ** 2 - 25) ** 2 / 100 for x in range(11)]
for beta in (1.0, 2.0, 3.0):
    n = len(V)
    P = np.zeros((n, n))
    for x in range(n):
        for y in (x - 1, x + 1):
            if 0 <= y < n:
                P[x, y] = 0.5 * min(1, math.exp(-beta * (V[y] - V[x])))
        P[x, x] = 1 - P[x].sum()
    mu = np.exp(-beta * np.array(V))
    mu /= mu.sum()
    show(f"double well C_PI beta={beta}", cpi(P, mu))

# Curie-Weiss, N = 2, zero field, beta = 1: H = -m^2/(2N)
beta, N = 1.0, 2
confs = list(itertools.product([-1, 1], repeat=N))
H = [-(sum(c) ** 2) / (2 * N) for c in confs]

# flip energy from (+,-) flipping spin 2 (-1 -> +1): H(++) - H(+-)
show("CW N=2 flip from ++", math.exp(-beta * max(0.0, H[1] - H[3])) / N)

# Bernoulli-Laplace exchange on l sites, k particles, rate 1/(k(l-k)) per pair
for l, k in ((4, 2), (2, 1), (6, 3), (6, 2)):
    states = [s for s in itertools.product([0, 1], repeat=l) if sum(s) == k]
    idx = {s: i for i, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for s in states:
        for i in range(l):
            for j in range(l):
                if s[i] == 1 and s[j] == 0:
                    t = list(s)
                    t[i], t[j] = 0, 1
                    Q[idx[s], idx[tuple(t)]] += 1 / (k * (l - k))
    Q -= np.diag(Q.sum(axis=1))
    w = np.sort(np.linalg.eigvalsh(-Q))
    show(f"BL spectral C_PI l={l} k={k}", 1 / w[1])

# free energy critical point, zero field, one block
beta = 1.5
z = brentq(lambda z: z - math.tanh(beta * z), 0.1, 1.0)
show("CW critical z beta=1.5", z)
show("CW closed form F", 0.5 * z * z - math.log(math.cosh(beta * z)) / beta)

# TV coupling example
show("TV (.7,.3) vs (.5,.5)", 0.5 * (abs(0.7 - 0.5) + abs(0.3 - 0.5)))
