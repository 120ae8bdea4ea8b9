"""Reference optimizers sharing the score function interface of the LABO
loop: uniform random search, CMA-ES and Bayesian optimization directly over
the raw design vector.

A score function takes a design vector and returns either a number or an
object with an ``F`` attribute (and optionally ``p``). Every optimizer spends
exactly ``budget`` calls and records them in a SearchTrace.

    >>> trace = LABOToolkit.cmaes_search(200, seed=0, score_fn=score_fn)
    >>> trace.best()
"""
import math
from dataclasses import dataclass, field
from typing import List
import numpy as np
from LABOToolkit.utils import LABOClientError, DegenerateCovariance, SeedTree, maybe_log
from LABOToolkit.encoders import hash_of
from LABOToolkit.gp import SurrogateConfig, SurrogateLoop

EIGEN_FLOOR = 1e-14
DEGENERATE_REPEATS = 3


def evaluate(score_fn,theta):
    """Calls a score function and normalises its result to (F, p, report)."""
    result = score_fn(theta)
    if hasattr(result,"F"):
        return float(result.F), getattr(result,"p",None), result
    return float(result), None, None


@dataclass
class SearchTrace:
    """Every evaluation an optimizer made, in order."""
    optimizer: str
    thetas: List[np.ndarray] = field(default_factory=list)
    scores: List[float] = field(default_factory=list)
    labels: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def add(self,theta,F,p=None):
        self.thetas.append(np.array(theta,float))
        self.scores.append(float(F))
        self.labels.append(None if p is None else np.asarray(p))

    def __len__(self):
        return len(self.scores)

    def best_index(self):
        return int(np.argmax(self.scores))

    def best(self):
        """(theta, F) of the best evaluation."""
        i = self.best_index()
        return self.thetas[i], self.scores[i]

    def best_so_far(self):
        """Running maximum of F."""
        return np.maximum.accumulate(self.scores) if self.scores else np.zeros(0)

    def to_json(self):
        return {
            "optimizer" : self.optimizer,
            "theta" : self.thetas,
            "F" : self.scores,
            "p" : self.labels,
            "notes" : self.notes
        }

    def content_hash(self):
        return hash_of(self.to_json())


def uniform_search(budget,seed,score_fn,dim=185,log=None):
    """Uniform random search over [0,1]^dim."""
    if budget <= 0:
        raise LABOClientError("budget must be positive")
    rng = SeedTree(seed).stream("uniform")
    trace = SearchTrace("uniform")
    for _ in range(budget):
        theta = rng.uniform(size=dim)
        F, p, _ = evaluate(score_fn,theta)
        trace.add(theta,F,p)
    maybe_log(log,"search_done",{"optimizer" : "uniform", "evaluations" : budget, "best" : max(trace.scores)})
    return trace


def reflect(x,lower=0.0,upper=1.0):
    """Folds points back into [lower, upper] by mirror reflection."""
    width = upper - lower
    y = np.mod(np.asarray(x,float) - lower,2*width)
    return lower + np.where(y > width,2*width - y,y)


class CMAES:
    """CMA-ES for minimisation with rank-one and rank-mu covariance updates
    and cumulative step-size adaptation.

    Args:
        xstart: initial mean
        sigma: initial step size
        rng (numpy.random.Generator): sampling stream
        popsize (int, optional): defaults to 4 + floor(3 ln d)
        bounds (tuple, optional): (lower, upper) for reflection; unbounded
            when None
    """
    def __init__(self,xstart,sigma,rng,popsize=None,bounds=None,log=None):
        self.mean = np.array(xstart,float)
        n = self.mean.shape[0]
        self.dim = n
        self.sigma = float(sigma)
        self.rng = rng
        self.bounds = bounds
        self.log = log
        self.lam = int(popsize) if popsize else 4 + int(3*math.log(n))
        if self.lam < 4:
            raise LABOClientError("population size must be at least 4")
        self.mu = self.lam//2
        raw = np.log(self.lam/2 + 0.5) - np.log(np.arange(1,self.mu + 1))
        self.weights = raw/raw.sum()
        self.mueff = 1.0/np.sum(self.weights**2)
        self.cc = (4 + self.mueff/n)/(n + 4 + 2*self.mueff/n)
        self.cs = (self.mueff + 2)/(n + self.mueff + 5)
        self.c1 = 2/((n + 1.3)**2 + self.mueff)
        self.cmu = min(1 - self.c1,2*(self.mueff - 2 + 1/self.mueff)/((n + 2)**2 + self.mueff))
        self.damps = 2*self.mueff/self.lam + 0.3 + self.cs
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.eigenvalues = np.ones(n)
        self.eigenbasis = np.eye(n)
        self.counteval = 0
        self.generation = 0
        self.floor_hits = 0

    def ask(self):
        """Samples lambda candidates, reflected into the bounds if any."""
        z = self.rng.standard_normal((self.lam,self.dim))
        y = (z*np.sqrt(self.eigenvalues)) @ self.eigenbasis.T
        x = self.mean + self.sigma*y
        if self.bounds is not None:
            x = reflect(x,*self.bounds)
        return x

    def _decompose(self):
        self.C = (self.C + self.C.T)/2.0
        values, basis = np.linalg.eigh(self.C)
        if np.any(values < EIGEN_FLOOR):
            values = np.maximum(values,EIGEN_FLOOR)
            self.C = (basis*values) @ basis.T
            self.C = (self.C + self.C.T)/2.0
            self.floor_hits += 1
            if self.floor_hits >= DEGENERATE_REPEATS:
                err = DegenerateCovariance(f"covariance floored {self.floor_hits} times")
                maybe_log(self.log,"cma_degenerate",{"generation" : self.generation, "floor_hits" : self.floor_hits},str(err))
        else:
            self.floor_hits = 0
        self.eigenvalues = values
        self.eigenbasis = basis

    def tell(self,X,fitness):
        """Updates mean, paths, covariance and step size from evaluated
        candidates (lower fitness is better)."""
        X = np.asarray(X,float)
        n = self.dim
        self.counteval += len(fitness)
        self.generation += 1
        old = self.mean
        order = np.argsort(fitness,kind="stable")
        best = X[order[:self.mu]]
        self.mean = self.weights @ best
        y = self.mean - old
        invsqrt = (self.eigenbasis/np.sqrt(self.eigenvalues)) @ self.eigenbasis.T
        z = invsqrt @ y
        self.ps = (1 - self.cs)*self.ps + math.sqrt(self.cs*(2 - self.cs)*self.mueff)/self.sigma*z
        hsig = float(np.sum(self.ps**2)/n/(1 - (1 - self.cs)**(2*self.counteval/self.lam)) < 2 + 4.0/(n + 1))
        self.pc = (1 - self.cc)*self.pc + math.sqrt(self.cc*(2 - self.cc)*self.mueff)/self.sigma*hsig*y
        c1a = self.c1*(1 - (1 - hsig**2)*self.cc*(2 - self.cc))
        self.C *= 1 - c1a - self.cmu*np.sum(self.weights)
        self.C += self.c1*np.outer(self.pc,self.pc)
        steps = (best - old)/self.sigma
        self.C += self.cmu*(steps.T*self.weights) @ steps
        self.sigma *= math.exp(min(1.0,(self.cs/self.damps)*(np.sum(self.ps**2)/n - 1)/2))
        self._decompose()


def cmaes_search(budget,seed,score_fn,dim=185,sigma0=0.3,popsize=None,log=None):
    """CMA-ES maximising F over [0,1]^dim.

    A last generation that does not fit the budget is evaluated partially
    and never told.
    """
    seeds = SeedTree(seed)
    rng = seeds.stream("cmaes")
    es = CMAES(rng.uniform(size=dim),sigma0,rng,popsize,(0.0,1.0),log)
    if budget < es.lam:
        raise LABOClientError(f"budget {budget} is smaller than the population size {es.lam}")
    trace = SearchTrace("cmaes",notes={"boundary" : "reflection", "popsize" : es.lam})
    while len(trace) < budget:
        X = es.ask()
        n = min(es.lam,budget - len(trace))
        values = []
        for theta in X[:n]:
            F, p, _ = evaluate(score_fn,theta)
            trace.add(theta,F,p)
            values.append(-F)
        if n == es.lam:
            es.tell(X,values)
        maybe_log(log,"cma_generation",{"generation" : es.generation, "sigma" : es.sigma, "best" : max(trace.scores)})
    return trace


def raw_bo_search(budget,seed,score_fn,dim=185,config=None,log=None):
    """Bayesian optimization over the raw design vector.

    The first ``n_init`` designs are uniform samples, then the GP and UCB
    propose ``n_candidates`` designs per iteration.
    """
    if budget <= 0:
        raise LABOClientError("budget must be positive")
    config = config or SurrogateConfig()
    seeds = SeedTree(seed)
    init = seeds.stream("init")
    acquisition = seeds.stream("acquisition")
    loop = SurrogateLoop(config,seeds.stream("gp-fit"),log)
    trace = SearchTrace("raw_bo")
    for theta in init.uniform(size=(min(config.n_init,budget),dim)):
        F, p, _ = evaluate(score_fn,theta)
        trace.add(theta,F,p)
    while len(trace) < budget:
        loop.update(np.array(trace.thetas),np.array(trace.scores))
        batch = loop.propose(min(config.n_candidates,budget - len(trace)),acquisition,dim)
        for theta in batch:
            F, p, _ = evaluate(score_fn,theta)
            trace.add(theta,F,p)
        maybe_log(log,"bo_iteration",{"optimizer" : "raw_bo", "evaluations" : len(trace), "best" : max(trace.scores)})
    return trace
