"""Learned latent representation of design vectors.

An encoder maps a design vector to a Gaussian (mu, sigma); a sample
z = mu + sigma * eps is squashed to f = sigmoid(z) in (0,1)^d'. A decoder
maps f back to a design vector and a predictor maps f to per-task success
probabilities. The Bayesian optimizer searches over f.

    >>> rep = Representation(rng=seeds.stream("init"))
    >>> rep.pretrain(D, steps=10000, rng=seeds.stream("epsilon"))
    >>> mu, sigma = rep.encode(theta)
"""
import io
import json
from dataclasses import dataclass
from typing import Optional
import numpy as np
from LABOToolkit.utils import (NonPositiveSigma, MissingLabels, EmptyDataset, ShapeMismatch,
                               LABOError, LABOClientError, maybe_log, content_hash)
from LABOToolkit.network import MLP, AdamState, adam_step, sigmoid

CLAMP = 1e-7
CHECKPOINT_VERSION = 1
NETWORKS = ("encoder","decoder","predictor")
KL_DIRECTIONS = ("reverse","standard")


@dataclass
class LatentCode:
    """A latent sample and the Gaussian it came from."""
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    f: np.ndarray


@dataclass
class LabeledDesign:
    """A scored design: vector, per-task success bits and score."""
    theta: np.ndarray
    p: Optional[np.ndarray]
    F: float

    def to_json(self):
        return {"theta" : self.theta, "p" : self.p, "F" : self.F}


def sample_latent(mu,sigma,epsilon):
    """Reparameterised sample z = mu + sigma * eps and f = sigmoid(z).

    Raises:
        NonPositiveSigma: if any sigma is not positive
    """
    mu = np.asarray(mu,float)
    sigma = np.asarray(sigma,float)
    if np.any(sigma <= 0):
        raise NonPositiveSigma("sigma must be positive")
    z = mu + sigma*np.asarray(epsilon,float)
    return LatentCode(mu,sigma,z,sigmoid(z))


def kl_term(mu,sigma,direction="reverse"):
    """KL divergence between the latent Gaussian and the unit Gaussian.

    ``reverse``: sum_j log s_j + (1 + m_j^2)/(2 s_j^2) - 1/2
    ``standard``: sum_j (s_j^2 + m_j^2 - 1)/2 - log s_j

    Sums over the last axis.

    Raises:
        NonPositiveSigma: if any sigma is not positive
    """
    mu = np.asarray(mu,float)
    sigma = np.asarray(sigma,float)
    if np.any(sigma <= 0):
        raise NonPositiveSigma("sigma must be positive")
    if direction == "reverse":
        return np.sum(np.log(sigma) + (1.0 + mu*mu)/(2.0*sigma*sigma) - 0.5,axis=-1)
    if direction == "standard":
        return np.sum((sigma*sigma + mu*mu - 1.0)/2.0 - np.log(sigma),axis=-1)
    raise LABOClientError(f"unknown KL direction {direction}")


def kl_gradients(mu,log_sigma,direction="reverse"):
    """Gradients of kl_term with respect to mu and log sigma."""
    var = np.exp(2.0*log_sigma)
    if direction == "reverse":
        return mu/var, 1.0 - (1.0 + mu*mu)/var
    return mu, var - 1.0


def reconstruction_error(theta,theta_hat):
    """(1/d) ||theta - theta_hat||^2, averaged over the batch."""
    theta = np.atleast_2d(theta)
    diff = theta - np.atleast_2d(theta_hat)
    return float(np.mean(np.sum(diff*diff,axis=1)/theta.shape[1]))


def cross_entropy(p,p_hat):
    """Binary cross-entropy summed over tasks, averaged over the batch.

    Predictions are clamped to [1e-7, 1 - 1e-7].
    """
    q = np.clip(np.atleast_2d(p_hat),CLAMP,1.0 - CLAMP)
    p = np.atleast_2d(p)
    return float(np.mean(-np.sum(p*np.log(q) + (1.0 - p)*np.log(1.0 - q),axis=1)))


class Representation:
    """Encoder, decoder and success predictor with their optimizer states.

    Args:
        dim (int): design vector length
        latent_dim (int): d'
        hidden (int): hidden layer width
        n_tasks (int): predictor output width
        kl_direction (str): ``reverse`` or ``standard``
        kl_weight (float): scale of the KL term
        rng (numpy.random.Generator, optional): initialisation stream; all
            parameters are zero without it
    """
    def __init__(self,dim=185,latent_dim=32,hidden=100,n_tasks=160,kl_direction="reverse",kl_weight=1.0,rng=None):
        if kl_direction not in KL_DIRECTIONS:
            raise LABOClientError(f"unknown KL direction {kl_direction}")
        self.dim = dim
        self.latent_dim = latent_dim
        self.hidden = hidden
        self.n_tasks = n_tasks
        self.kl_direction = kl_direction
        self.kl_weight = kl_weight
        specs = {
            "encoder" : ([dim,hidden,hidden,2*latent_dim],["relu","relu","linear"]),
            "decoder" : ([latent_dim,hidden,dim],["relu","sigmoid"]),
            "predictor" : ([latent_dim,hidden,n_tasks],["relu","sigmoid"]),
        }
        self.nets = {}
        for name in NETWORKS:
            widths, acts = specs[name]
            self.nets[name] = MLP.initialize(widths,acts,rng) if rng is not None else MLP(widths,acts)
        self.adam = {name : AdamState.zeros(net.n_params) for name,net in self.nets.items()}

    @property
    def encoder(self):
        return self.nets["encoder"]

    @property
    def decoder(self):
        return self.nets["decoder"]

    @property
    def predictor(self):
        return self.nets["predictor"]

    def descriptor(self):
        return {
            "dim" : self.dim,
            "latent_dim" : self.latent_dim,
            "hidden" : self.hidden,
            "n_tasks" : self.n_tasks,
            "kl_direction" : self.kl_direction,
            "kl_weight" : self.kl_weight,
            "networks" : {name : net.descriptor() for name,net in self.nets.items()}
        }

    def encode(self,theta):
        """Gaussian parameters (mu, sigma) of a batch of design vectors."""
        out = self.encoder(theta)
        return out[:,:self.latent_dim], np.exp(out[:,self.latent_dim:])

    def encode_mean(self,theta):
        """Deterministic latent f = sigmoid(mu)."""
        mu, _ = self.encode(theta)
        return sigmoid(mu)

    def sample_latent(self,mu,sigma,epsilon):
        if np.shape(epsilon)[-1] != self.latent_dim:
            raise ShapeMismatch(f"epsilon must have {self.latent_dim} entries")
        return sample_latent(mu,sigma,epsilon)

    def decode_latent(self,f):
        """Design vector reconstructed from f, inside (0,1)."""
        return self.decoder(f)

    def predict_success(self,f):
        """Per-task success probabilities for f."""
        return self.predictor(f)

    def _forward(self,theta,epsilon):
        theta = np.atleast_2d(np.asarray(theta,float))
        epsilon = np.atleast_2d(np.asarray(epsilon,float))
        if epsilon.shape != (theta.shape[0],self.latent_dim):
            raise ShapeMismatch(f"epsilon must have shape ({theta.shape[0]},{self.latent_dim})")
        out, enc_cache = self.encoder.forward(theta)
        mu = out[:,:self.latent_dim]
        log_sigma = out[:,self.latent_dim:]
        sigma = np.exp(log_sigma)
        z = mu + sigma*epsilon
        f = sigmoid(z)
        theta_hat, dec_cache = self.decoder.forward(f)
        return theta, epsilon, mu, log_sigma, sigma, f, theta_hat, enc_cache, dec_cache

    def _losses(self,theta,epsilon,p=None,grad=False):
        theta, epsilon, mu, log_sigma, sigma, f, theta_hat, enc_cache, dec_cache = self._forward(theta,epsilon)
        batch = theta.shape[0]
        kl = kl_term(mu,sigma,self.kl_direction)
        loss = reconstruction_error(theta,theta_hat) + self.kl_weight*float(np.mean(kl))
        if p is not None:
            p = np.atleast_2d(np.asarray(p,float))
            if p.shape != (batch,self.n_tasks):
                raise ShapeMismatch(f"labels must have shape ({batch},{self.n_tasks})")
            p_hat, pred_cache = self.predictor.forward(f)
            loss += cross_entropy(p,p_hat)
        if not grad:
            return loss
        grads = {}
        d_theta_hat = 2.0*(theta_hat - theta)/(self.dim*batch)
        dec_grads, d_f = self.decoder.backward(dec_cache,d_theta_hat)
        grads["decoder"] = MLP.flatten(dec_grads)
        if p is not None:
            inside = (p_hat > CLAMP) & (p_hat < 1.0 - CLAMP)
            q = np.clip(p_hat,CLAMP,1.0 - CLAMP)
            d_p_hat = np.where(inside,-(p/q - (1.0 - p)/(1.0 - q)),0.0)/batch
            pred_grads, d_f_pred = self.predictor.backward(pred_cache,d_p_hat)
            grads["predictor"] = MLP.flatten(pred_grads)
            d_f = d_f + d_f_pred
        d_z = d_f*f*(1.0 - f)
        kl_mu, kl_log_sigma = kl_gradients(mu,log_sigma,self.kl_direction)
        d_mu = d_z + self.kl_weight*kl_mu/batch
        d_log_sigma = d_z*epsilon*sigma + self.kl_weight*kl_log_sigma/batch
        enc_grads, _ = self.encoder.backward(enc_cache,np.hstack([d_mu,d_log_sigma]))
        grads["encoder"] = MLP.flatten(enc_grads)
        return loss, grads

    def loss_pretrain(self,theta,epsilon,grad=False):
        """(1/d)||theta - theta_hat||^2 + KL, averaged over the batch.

        Returns the loss, or (loss, gradients per network) when ``grad``.
        """
        return self._losses(theta,epsilon,None,grad)

    def loss_rep(self,designs,epsilon,grad=False):
        """Pretraining loss plus the success cross-entropy.

        Args:
            designs: list of LabeledDesign

        Raises:
            MissingLabels: if a design carries no success vector
        """
        if any(d.p is None for d in designs):
            raise MissingLabels("every design needs a success vector")
        theta = np.array([d.theta for d in designs])
        p = np.array([d.p for d in designs],float)
        return self._losses(theta,epsilon,p,grad)

    def _apply(self,grads,lr):
        for name,g in grads.items():
            net = self.nets[name]
            net.set_flat(adam_step(net.flat(),g,self.adam[name],lr))

    def _check(self,loss,step):
        if not np.isfinite(loss):
            raise LABOError(f"training loss is not finite at step {step}")

    def pretrain(self,D,steps,rng,batch_size=32,lr=1e-4,log=None,every=1000):
        """Trains encoder and decoder on unlabeled design vectors.

        Args:
            D: (N, dim) design vectors
            steps (int): number of Adam steps
            rng (numpy.random.Generator): batch and epsilon stream

        Returns:
            list of (step, loss) pairs logged every ``every`` steps

        Raises:
            EmptyDataset: if D is empty
        """
        D = np.atleast_2d(np.asarray(D,float))
        if D.shape[0] == 0 or D.size == 0:
            raise EmptyDataset("pretraining needs at least one design")
        history = []
        for step in range(steps):
            idx = rng.integers(0,D.shape[0],size=batch_size)
            eps = rng.standard_normal((batch_size,self.latent_dim))
            loss, grads = self.loss_pretrain(D[idx],eps,grad=True)
            self._check(loss,step)
            self._apply(grads,lr)
            if step % every == 0 or step == steps - 1:
                history.append((step,loss))
                maybe_log(log,"pretrain_progress",{"step" : step, "loss" : loss})
        return history

    def finetune(self,Q,D,steps,rng,batch_size=32,lr=1e-4,log=None):
        """Joint training: half the steps on the labeled loss over Q (all three
        networks), the other half on the pretraining loss over D.

        Raises:
            EmptyDataset: if Q or D is empty
        """
        if len(Q) == 0:
            raise EmptyDataset("finetuning needs labeled designs")
        D = np.atleast_2d(np.asarray(D,float))
        if D.size == 0:
            raise EmptyDataset("finetuning needs unlabeled designs")
        labeled = steps//2
        loss = None
        for step in range(labeled):
            idx = rng.integers(0,len(Q),size=batch_size)
            eps = rng.standard_normal((batch_size,self.latent_dim))
            loss, grads = self.loss_rep([Q[i] for i in idx],eps,grad=True)
            self._check(loss,step)
            self._apply(grads,lr)
        rep_loss = loss
        for step in range(steps - labeled):
            idx = rng.integers(0,D.shape[0],size=batch_size)
            eps = rng.standard_normal((batch_size,self.latent_dim))
            loss, grads = self.loss_pretrain(D[idx],eps,grad=True)
            self._check(loss,labeled + step)
            self._apply(grads,lr)
        maybe_log(log,"finetune",{"steps" : steps, "loss_rep" : rep_loss, "loss_pretrain" : loss})
        return rep_loss, loss

    def save(self,path,extra=None):
        """Writes a versioned checkpoint archive.

        Returns:
            str: content hash of the stored arrays (zip timestamps excluded)
        """
        arrays = {
            "version" : np.array(CHECKPOINT_VERSION),
            "descriptor" : np.array(json.dumps(self.descriptor())),
            "extra" : np.array(json.dumps(extra if extra is not None else {}))
        }
        for name,net in self.nets.items():
            arrays[name] = net.flat()
            arrays[name + "_m"] = self.adam[name].m
            arrays[name + "_v"] = self.adam[name].v
            arrays[name + "_t"] = np.array(self.adam[name].t)
        buffer = io.BytesIO()
        np.savez(buffer,**arrays)
        data = buffer.getvalue()
        with open(path,'wb') as stream:
            stream.write(data)
        return content_hash(b"".join(arrays[k].tobytes() for k in sorted(arrays)))

    @classmethod
    def load(cls,path):
        """Reads a checkpoint written by save.

        Returns:
            (Representation, extra dictionary)
        """
        with np.load(path,allow_pickle=False) as data:
            if int(data["version"]) != CHECKPOINT_VERSION:
                raise LABOClientError(f"unsupported checkpoint version {int(data['version'])}")
            desc = json.loads(str(data["descriptor"]))
            rep = cls(desc["dim"],desc["latent_dim"],desc["hidden"],desc["n_tasks"],desc["kl_direction"],desc["kl_weight"])
            for name,net in rep.nets.items():
                net.set_flat(data[name])
                rep.adam[name] = AdamState(data[name + "_m"].copy(),data[name + "_v"].copy(),int(data[name + "_t"]))
            extra = json.loads(str(data["extra"]))
        return rep, extra
