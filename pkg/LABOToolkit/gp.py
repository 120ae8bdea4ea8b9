"""Gaussian process surrogate over the latent space.

The model uses an isotropic Matern kernel with closed forms for smoothness
1/2, 3/2 and 5/2. Targets are standardised before fitting; hyperparameters
(log output scale, log lengthscale, log noise) maximise the log marginal
likelihood with L-BFGS-B from several starts.

    >>> model = GPModel(nu=2.5).fit(X, y, rng=seeds.stream("gp-fit"))
    >>> mean, std = model.posterior(x)
    >>> batch = propose(model, beta=0.2, n_candidates=2, rng=rng)
"""
import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional
import numpy as np
from scipy import linalg
from scipy.optimize import minimize
from LABOToolkit.utils import UnsupportedSmoothness, SingularGram, UnfittedModel, LABOClientError, maybe_log

SMOOTHNESS = (0.5,1.5,2.5)
JITTERS = (1e-6,1e-5,1e-4,1e-3,1e-2)
LOG_BOUNDS = ((-6.0,6.0),(-6.0,6.0),(math.log(1e-6),2.0))
INTERIOR = 1e-6
ACQ_SIGNS = ("ucb","paper","lcb")


@dataclass
class SurrogateConfig:
    """Settings of the surrogate and the acquisition (the ``surrogate`` section)."""
    nu: float = 2.5
    beta: float = 0.2
    acq_sign: str = "ucb"
    n_candidates: int = 2
    n_raw: int = 1024
    n_restarts: int = 10
    refine_steps: int = 50
    refit_every: int = 2
    fit_restarts: int = 4
    n_init: int = 2

    def __post_init__(self):
        _check_nu(self.nu)
        if self.acq_sign not in ACQ_SIGNS:
            raise LABOClientError(f"unknown acquisition sign {self.acq_sign}")

    @classmethod
    def from_dict(cls,data):
        names = set(cls.__dataclass_fields__)
        return cls(**{k : v for k,v in (data or {}).items() if k in names})


class SurrogateLoop:
    """GP bookkeeping shared by the Bayesian optimizers.

    Hyperparameters are refit on the first update and then whenever
    ``refit_every`` evaluations have been added since the last fit; in between
    the model is conditioned on the new data with the previous hyperparameters.
    """
    def __init__(self,config,rng,log=None):
        self.config = config
        self.rng = rng
        self.log = log
        self.model = GPModel(config.nu)
        self.rounds = 0
        self.last_fit = None

    def update(self,X,y):
        """Conditions on all data and refits when enough evaluations arrived."""
        self.model.set_data(X,y)
        n = len(y)
        if self.last_fit is None or n - self.last_fit >= max(self.config.refit_every,1):
            self.model.fit(rng=self.rng,restarts=self.config.fit_restarts,log=self.log)
            self.last_fit = n
        self.rounds += 1
        return self.model

    def state(self):
        return {"rounds" : self.rounds, "last_fit" : self.last_fit, "hyper" : self.model.hyper.to_json()}

    def restore(self,state):
        self.rounds = int(state["rounds"])
        self.last_fit = state.get("last_fit")
        self.model.set_hyper(Hyper(**state["hyper"]))

    def propose(self,n,rng,dim=None):
        c = self.config
        return propose(self.model,c.beta,n,c.n_raw,c.n_restarts,dim,rng,c.refine_steps,c.acq_sign)


@dataclass
class Hyper:
    """Kernel and noise hyperparameters (noise is a variance)."""
    alpha: float = 1.0
    lengthscale: float = 0.5
    nu: float = 2.5
    noise: float = 1e-4

    def to_log(self):
        return np.log([self.alpha,self.lengthscale,self.noise])

    @classmethod
    def from_log(cls,values,nu):
        a, l, n = np.exp(values)
        return cls(float(a),float(l),nu,float(n))

    def to_json(self):
        return asdict(self)


def _check_nu(nu):
    if nu not in SMOOTHNESS:
        raise UnsupportedSmoothness(f"smoothness {nu} is not one of 1/2, 3/2, 5/2")


def distances(X,Y):
    """Euclidean distance matrix between the rows of X and Y."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    sq = np.sum(X*X,axis=1)[:,None] + np.sum(Y*Y,axis=1)[None,:] - 2.0*X @ Y.T
    return np.sqrt(np.maximum(sq,0.0))


def matern(r,alpha,nu):
    """Matern covariance of scaled distances r."""
    _check_nu(nu)
    if nu == 0.5:
        return alpha*np.exp(-r)
    if nu == 1.5:
        s = math.sqrt(3.0)*r
        return alpha*(1.0 + s)*np.exp(-s)
    s = math.sqrt(5.0)*r
    return alpha*(1.0 + s + 5.0*r*r/3.0)*np.exp(-s)


def matern_log_lengthscale_grad(r,alpha,nu):
    """Derivative of the covariance with respect to log lengthscale."""
    if nu == 0.5:
        return alpha*r*np.exp(-r)
    if nu == 1.5:
        return 3.0*alpha*r*r*np.exp(-math.sqrt(3.0)*r)
    return alpha*(5.0*r*r/3.0)*(1.0 + math.sqrt(5.0)*r)*np.exp(-math.sqrt(5.0)*r)


def matern_kernel(x,x2,hyper):
    """k(x, x') for two vectors.

    Raises:
        UnsupportedSmoothness: for smoothness other than 1/2, 3/2, 5/2
    """
    x = np.asarray(x,float)
    x2 = np.asarray(x2,float)
    if x.shape != x2.shape:
        raise LABOClientError("kernel inputs must have equal length")
    r = float(np.linalg.norm(x - x2))/hyper.lengthscale
    return float(matern(r,hyper.alpha,hyper.nu))


def gram(X,Y,hyper):
    """Covariance matrix between the rows of X and Y."""
    return matern(distances(X,Y)/hyper.lengthscale,hyper.alpha,hyper.nu)


class GPModel:
    """Exact GP regression with a cached Cholesky factor.

    Attributes:
        hyper (Hyper): current hyperparameters
        X, y: training inputs and raw targets
        y_mean, y_std: standardisation constants
        jitter: diagonal jitter the last factorisation needed
    """
    def __init__(self,nu=2.5,hyper=None):
        _check_nu(nu)
        self.hyper = hyper if hyper is not None else Hyper(nu=nu)
        self.hyper.nu = nu
        self.X = None
        self.y = None
        self.y_mean = 0.0
        self.y_std = 1.0
        self.jitter = 0.0
        self._cache = None

    def set_data(self,X,y):
        X = np.atleast_2d(np.asarray(X,float))
        y = np.asarray(y,float).ravel()
        if X.shape[0] != y.shape[0]:
            raise LABOClientError("inputs and targets differ in length")
        self.X = X
        self.y = y
        self.y_mean = float(np.mean(y)) if y.size else 0.0
        std = float(np.std(y)) if y.size else 0.0
        self.y_std = std if std > 0 else 1.0
        self._cache = None
        return self

    def set_hyper(self,hyper):
        _check_nu(hyper.nu)
        self.hyper = hyper
        self._cache = None

    @property
    def fitted(self):
        return self.X is not None and self.X.shape[0] > 0

    @property
    def z(self):
        """Standardised targets."""
        return (self.y - self.y_mean)/self.y_std

    def _factor(self,hyper):
        K = gram(self.X,self.X,hyper)
        n = K.shape[0]
        for jitter in JITTERS:
            try:
                c = linalg.cho_factor(K + (hyper.noise + jitter)*np.eye(n),lower=True)
                return K, c, jitter
            except linalg.LinAlgError:
                continue
        raise SingularGram(f"Gram matrix is singular even with jitter {JITTERS[-1]}")

    def _state(self):
        if not self.fitted:
            raise UnfittedModel("the model has no data")
        if self._cache is None:
            K, c, jitter = self._factor(self.hyper)
            self.jitter = jitter
            self._cache = (c,linalg.cho_solve(c,self.z))
        return self._cache

    def log_marginal_likelihood(self,hyper=None,grad=False):
        """Log marginal likelihood of the standardised targets.

        With ``grad`` also returns the gradient with respect to
        (log alpha, log lengthscale, log noise).
        """
        hyper = hyper if hyper is not None else self.hyper
        if not self.fitted:
            raise UnfittedModel("the model has no data")
        K, c, jitter = self._factor(hyper)
        z = self.z
        a = linalg.cho_solve(c,z)
        n = z.shape[0]
        lml = -0.5*float(z @ a) - float(np.sum(np.log(np.diag(c[0])))) - 0.5*n*math.log(2*math.pi)
        if not grad:
            return lml
        inner = np.outer(a,a) - linalg.cho_solve(c,np.eye(n))
        r = distances(self.X,self.X)/hyper.lengthscale
        dK = (K,matern_log_lengthscale_grad(r,hyper.alpha,hyper.nu),hyper.noise*np.eye(n))
        return lml, np.array([0.5*float(np.sum(inner*d)) for d in dK])

    def fit(self,X=None,y=None,rng=None,restarts=4,optimize=True,log=None):
        """Fits hyperparameters by maximising the log marginal likelihood.

        The current hyperparameters are the first start; ``restarts`` random
        starts follow. The best result, never worse than the first start,
        is kept.

        Returns:
            GPModel: self
        """
        if X is not None:
            self.set_data(X,y)
        if not self.fitted:
            raise UnfittedModel("the model has no data")
        nu = self.hyper.nu
        starts = [np.clip(self.hyper.to_log(),[b[0] for b in LOG_BOUNDS],[b[1] for b in LOG_BOUNDS])]
        if rng is not None:
            for _ in range(restarts):
                starts.append(np.array([
                    rng.uniform(-1.0,1.0),
                    rng.uniform(math.log(0.05),math.log(2.0)),
                    rng.uniform(math.log(1e-6),math.log(1e-1))
                ]))
        best = Hyper.from_log(starts[0],nu)
        best_lml = self.log_marginal_likelihood(best)
        initial_lml = best_lml
        if optimize:
            def objective(v):
                try:
                    lml, g = self.log_marginal_likelihood(Hyper.from_log(v,nu),grad=True)
                except SingularGram:
                    return 1e25, np.zeros(3)
                return -lml, -g
            for start in starts:
                res = minimize(objective,start,jac=True,method="L-BFGS-B",bounds=LOG_BOUNDS)
                if np.all(np.isfinite(res.x)) and -res.fun > best_lml:
                    best_lml = float(-res.fun)
                    best = Hyper.from_log(res.x,nu)
        self.set_hyper(best)
        self._state()
        maybe_log(log,"gp_fit",{
            "n" : int(self.X.shape[0]),
            "y_mean" : self.y_mean,
            "y_std" : self.y_std,
            "jitter" : self.jitter,
            "hyper" : self.hyper.to_json(),
            "lml" : best_lml,
            "lml_initial" : initial_lml
        })
        return self

    @property
    def prior_variance(self):
        """Prior variance of the latent function in target units."""
        return self.hyper.alpha*self.y_std**2

    def posterior(self,x):
        """Posterior mean and standard deviation of the latent function.

        Raises:
            UnfittedModel: if the model has no data
        """
        c, a = self._state()
        x = np.atleast_2d(np.asarray(x,float))
        Ks = gram(x,self.X,self.hyper)
        mean = Ks @ a
        v = linalg.solve_triangular(c[0],Ks.T,lower=True)
        var = self.hyper.alpha - np.sum(v*v,axis=0)
        std = np.sqrt(np.maximum(var,0.0))
        return self.y_mean + self.y_std*mean, self.y_std*std


def ucb(model,x,beta,sign="ucb"):
    """Upper confidence bound mean + beta std.

    ``paper`` (alias ``lcb``) gives the literal mean - beta std form.
    """
    mean, std = model.posterior(x)
    if sign in ("paper","lcb"):
        return mean - beta*std
    return mean + beta*std


def _project(x):
    return np.clip(x,INTERIOR,1.0 - INTERIOR)


def _refine(acq,x,steps,step_size=0.01,h=1e-6,halvings=10):
    value = float(acq(x[None,:])[0])
    d = x.shape[0]
    eye = np.eye(d)*h
    for _ in range(steps):
        probes = np.vstack([_project(x + eye),_project(x - eye)])
        vals = acq(probes)
        widths = (probes[:d] - probes[d:]).diagonal()
        widths = np.where(widths > 0,widths,1.0)
        g = (vals[:d] - vals[d:])/widths
        norm = float(np.linalg.norm(g))
        if norm == 0.0 or not np.isfinite(norm):
            break
        direction = g/norm
        eta = step_size
        moved = False
        for _ in range(halvings):
            cand = _project(x + eta*direction)
            cand_value = float(acq(cand[None,:])[0])
            if cand_value > value:
                x, value, moved = cand, cand_value, True
                break
            eta *= 0.5
        if not moved:
            break
    return x, value


def propose(model,beta,n_candidates=2,n_raw=1024,n_restarts=10,dim=None,rng=None,steps=50,sign="ucb",min_distance=1e-4):
    """Candidate batch maximising the acquisition over (0,1)^d.

    Raw uniform samples are ranked by acquisition, the best ``n_restarts``
    are refined by projected ascent along finite-difference gradients, and
    distinct points are selected greedily.

    Returns:
        (n_candidates, d) array strictly inside the unit cube
    """
    if not model.fitted:
        raise UnfittedModel("the model has no data")
    dim = dim if dim is not None else model.X.shape[1]
    rng = rng if rng is not None else np.random.default_rng()
    def acq(x):
        return ucb(model,x,beta,sign)
    raw = _project(rng.uniform(size=(n_raw,dim)))
    values = acq(raw)
    order = np.argsort(-values,kind="stable")
    refined = [_refine(acq,raw[i].copy(),steps) for i in order[:n_restarts]]
    pool = sorted(refined,key=lambda t: -t[1]) + [(raw[i],values[i]) for i in order]
    chosen = []
    for x,_ in pool:
        if all(np.linalg.norm(x - c) >= min_distance for c in chosen):
            chosen.append(x)
        if len(chosen) == n_candidates:
            break
    return np.array(chosen)


@dataclass
class BOEntry:
    """One element of Q."""
    f: np.ndarray
    F: float
    theta: np.ndarray
    p: Optional[np.ndarray] = None

    def to_json(self):
        return {"f" : self.f, "F" : self.F, "theta" : self.theta, "p" : self.p}

    @classmethod
    def from_json(cls,data):
        p = data.get("p")
        return cls(np.array(data["f"],float),float(data["F"]),np.array(data["theta"],float),
                   np.array(p,int) if p is not None else None)


@dataclass
class BODataset:
    """Evaluated designs in insertion order."""
    entries: List[BOEntry] = field(default_factory=list)

    def add(self,f,F,theta,p=None):
        self.entries.append(BOEntry(np.asarray(f,float),float(F),np.asarray(theta,float),p))

    def __len__(self):
        return len(self.entries)

    def inputs(self):
        return np.array([e.f for e in self.entries])

    def targets(self):
        return np.array([e.F for e in self.entries])

    def best(self):
        return max(self.entries,key=lambda e: e.F) if self.entries else None

    def reencode(self,encode):
        """Replaces every f with ``encode(theta)``."""
        if not self.entries:
            return
        fs = encode(np.array([e.theta for e in self.entries]))
        for e,f in zip(self.entries,fs):
            e.f = np.asarray(f,float)


def fit(data,nu=2.5,hyper=None,rng=None,restarts=4,log=None):
    """Fits a GP to a BODataset.

    Raises:
        LABOClientError: with fewer than two entries
    """
    if len(data) < 2:
        raise LABOClientError("fitting needs at least two observations")
    return GPModel(nu,hyper).fit(data.inputs(),data.targets(),rng=rng,restarts=restarts,log=log)
