"""Fixed architecture multilayer perceptrons in numpy.

Each network is a stack of dense layers with one activation per layer.
Gradients are propagated layer by layer by ``backward``; there is no general
autodiff. All arithmetic is float64.

    >>> net = MLP.initialize([185,100,100,64],["relu","relu","linear"],rng)
    >>> out, cache = net.forward(theta)
    >>> grads, d_input = net.backward(cache, d_out)
"""
from dataclasses import dataclass
import numpy as np
from LABOToolkit.utils import ShapeMismatch, LABOClientError

ACTIVATIONS = ("relu","sigmoid","linear")

def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x,float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0/(1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e/(1.0 + e)
    return out

def _activate(name,x):
    if name == "relu":
        return np.maximum(x,0.0)
    if name == "sigmoid":
        return sigmoid(x)
    return x


class MLP:
    """Dense network with per-layer activations.

    Attributes:
        widths (list): layer widths, input first
        activations (list): activation of every layer after the input
        weights (list): (fan_in, fan_out) matrices
        biases (list): fan_out vectors
    """
    def __init__(self,widths,activations,weights=None,biases=None):
        if len(activations) != len(widths) - 1:
            raise LABOClientError("one activation per layer is required")
        for a in activations:
            if a not in ACTIVATIONS:
                raise LABOClientError(f"unknown activation {a}")
        self.widths = [int(w) for w in widths]
        self.activations = list(activations)
        pairs = list(zip(self.widths[:-1],self.widths[1:]))
        self.weights = weights if weights is not None else [np.zeros(p) for p in pairs]
        self.biases = biases if biases is not None else [np.zeros(p[1]) for p in pairs]

    @classmethod
    def initialize(cls,widths,activations,rng):
        """Uniform fan-in initialisation in +-sqrt(6/fan_in), zero biases."""
        weights = []
        for fan_in,fan_out in zip(widths[:-1],widths[1:]):
            limit = np.sqrt(6.0/fan_in)
            weights.append(rng.uniform(-limit,limit,size=(fan_in,fan_out)))
        return cls(widths,activations,weights)

    def descriptor(self):
        return {"widths" : self.widths, "activations" : self.activations}

    @property
    def n_params(self):
        return sum(w.size + b.size for w,b in zip(self.weights,self.biases))

    def flat(self):
        """All parameters as one vector, layer by layer, weights before biases."""
        return np.concatenate([np.concatenate([w.ravel(),b]) for w,b in zip(self.weights,self.biases)])

    def set_flat(self,vector):
        vector = np.asarray(vector,float)
        if vector.shape != (self.n_params,):
            raise ShapeMismatch(f"expected {self.n_params} parameters, got {vector.shape}")
        i = 0
        for k,(w,b) in enumerate(zip(self.weights,self.biases)):
            self.weights[k] = vector[i:i+w.size].reshape(w.shape).copy()
            i += w.size
            self.biases[k] = vector[i:i+b.size].copy()
            i += b.size

    @staticmethod
    def flatten(grads):
        return np.concatenate([np.concatenate([dw.ravel(),db]) for dw,db in grads])

    def forward(self,x):
        """Forward pass.

        Returns:
            (output, cache) where cache holds the layer inputs and outputs

        Raises:
            ShapeMismatch: if the input width is wrong
        """
        x = np.atleast_2d(np.asarray(x,float))
        if x.shape[1] != self.widths[0]:
            raise ShapeMismatch(f"input width {x.shape[1]} does not match {self.widths[0]}")
        inputs, outputs = [], []
        a = x
        for w,b,act in zip(self.weights,self.biases,self.activations):
            inputs.append(a)
            a = _activate(act,a @ w + b)
            outputs.append(a)
        return a, (inputs,outputs)

    def __call__(self,x):
        return self.forward(x)[0]

    def backward(self,cache,grad_out):
        """Reverse pass for a gradient on the output.

        Returns:
            (list of (dW, db) per layer, gradient on the input)
        """
        inputs, outputs = cache
        g = np.asarray(grad_out,float)
        grads = []
        for k in reversed(range(len(self.weights))):
            act = self.activations[k]
            if act == "relu":
                g = g*(outputs[k] > 0)
            elif act == "sigmoid":
                g = g*outputs[k]*(1.0 - outputs[k])
            grads.append((inputs[k].T @ g,g.sum(axis=0)))
            g = g @ self.weights[k].T
        grads.reverse()
        return grads, g


@dataclass
class AdamState:
    """First and second moment estimates and step count of one network."""
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls,n):
        return cls(np.zeros(n),np.zeros(n),0)


def adam_step(params,grads,state,lr=1e-4,beta1=0.9,beta2=0.999,eps=1e-8):
    """One adaptive moment update.

    Args:
        params, grads: flat arrays of equal length
        state (AdamState): updated in place

    Returns:
        numpy.ndarray: the updated parameters
    """
    state.t += 1
    state.m = beta1*state.m + (1.0 - beta1)*grads
    state.v = beta2*state.v + (1.0 - beta2)*grads*grads
    m_hat = state.m/(1.0 - beta1**state.t)
    v_hat = state.v/(1.0 - beta2**state.t)
    return params - lr*m_hat/(np.sqrt(v_hat) + eps)
