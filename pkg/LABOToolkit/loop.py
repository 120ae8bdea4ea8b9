"""The experiment loop.

A run pretrains the representation on uniform design vectors, then spends
its evaluation budget on designs decoded from latent points proposed by the
GP acquisition, fine-tuning the representation after every round. The
baseline optimizers run through the same evaluation and logging path.

Everything a run produces lands in its output directory::

    runlog.jsonl        one JSON record per line
    summary.json        final reports, best design and content hashes
    curve.csv           best-so-far F and success rate per evaluation
    best_theta.txt      the best design, one value per line
    checkpoints/        state needed to resume (LABO runs)

    >>> log = LABOToolkit.run(LABOToolkit.RunConfig({"run" : {"budget" : 20}}))
"""
import os
import csv
import copy
import json
import time
import numpy as np
from LABOToolkit.utils import (LABOError, ConfigError, MalformedVector, SeedTree, Record, RecordSet,
                               generator_state, restore_generator)
from LABOToolkit.encoders import dumps, hash_of
from LABOToolkit.parser import complete, load_config, SECTIONS
from LABOToolkit.layout import DesignLayout, pin_fingers
from LABOToolkit.objects import build_suite, read_manifest, complexity_bin
from LABOToolkit.grasp import GraspConfig, ScoreReport, score, evaluate_suite, report_row
from LABOToolkit.representation import Representation, LabeledDesign
from LABOToolkit.gp import SurrogateConfig, SurrogateLoop, BODataset, BOEntry
from LABOToolkit.baselines import uniform_search, cmaes_search, raw_bo_search

LOG_VERSION = 1
STREAMS = ("init","epsilon","acquisition","gp-fit")
VOLATILE = ("wall_time",)


class Section:
    """Attribute access to one configuration section."""
    def __init__(self,name,data):
        self._name = name
        self._data = dict(data)

    def __getattr__(self,key):
        data = self.__dict__.get("_data",{})
        if key not in data:
            raise AttributeError(f"config section {self.__dict__.get('_name')} has no key {key}")
        return data[key]

    def to_json(self):
        return dict(self._data)


class RunConfig:
    """Typed view over a validated configuration.

    Every section of the configuration is an attribute:

        >>> config = RunConfig({"run" : {"optimizer" : "cmaes"}})
        >>> config.run.budget
        200

    Raises:
        ConfigError: if the merged configuration does not validate
    """
    def __init__(self,data=None):
        self.data = complete(data)
        for name in SECTIONS:
            setattr(self,name,Section(name,self.data[name]))

    @classmethod
    def from_file(cls,filepath=None,overrides=()):
        return cls(load_config(filepath,overrides))

    def snapshot(self):
        """Plain dictionary of the configuration."""
        return copy.deepcopy(self.data)

    def identity(self):
        """Snapshot without the output location, which does not affect results."""
        data = self.snapshot()
        data["run"].pop("out_dir",None)
        return data

    def grasp_config(self):
        return GraspConfig.from_dict(self.data["grasp"])

    def surrogate_config(self):
        return SurrogateConfig.from_dict(self.data["surrogate"])


def _stable(content):
    data = copy.deepcopy(content)
    if isinstance(data.get("record_def"),dict):
        for key in VOLATILE:
            data["record_def"].pop(key,None)
    return data


class RunLog(RecordSet):
    """RecordSet that also appends every record to a JSON lines file.

    Args:
        path (str, optional): file to write; records stay in memory only
            when omitted
        mode (str, optional): ``w`` starts a new file, ``a`` appends
    """
    def __init__(self,path=None,mode='w'):
        super().__init__()
        self.path = path
        self._stream = open(path,mode) if path is not None else None

    def add_record(self,record):
        super().add_record(record)
        if self._stream is not None:
            self._stream.write(dumps(record.content) + "\n")
            self._stream.flush()

    def close(self):
        if self._stream is not None:
            self._stream.close()
            self._stream = None

    @staticmethod
    def read(path,limit=None):
        """Records stored in a run log file, optionally only the first ``limit``."""
        records = []
        with open(path,'r') as stream:
            for line in stream:
                if limit is not None and len(records) >= limit:
                    break
                if line.strip():
                    records.append(Record(**json.loads(line)))
        return records

    @classmethod
    def reopen(cls,path,n_records):
        """Keeps the first ``n_records`` of a file and continues writing after them."""
        records = cls.read(path,n_records)
        log = cls(path,'w')
        for record in records:
            log.add_record(record)
        return log

    def evaluations(self):
        return [r.record_def for r in self.of_type("evaluation")]

    def best_so_far(self):
        """Running maximum of F over the evaluations."""
        scores = [e["F"] for e in self.evaluations()]
        return np.maximum.accumulate(scores) if scores else np.zeros(0)

    def content_hash(self):
        """Hash of every record, wall clock fields excluded."""
        return hash_of([_stable(r.content) for r in self.records])


def load_suite(config):
    """The task suite a configuration names: a manifest file or the
    procedural benchmark."""
    s = config.suite
    if s.manifest:
        return read_manifest(s.manifest)
    return build_suite(s.n_tasks,s.n_test,s.seed)


def episode_seed(config):
    return SeedTree(config.run.seed).integer("episode")


def pin(theta,config):
    """Applies the fixed finger count of the configuration, if any."""
    if config.design.fixed_fingers is not None:
        return pin_fingers(theta,config.design.fixed_fingers)
    return np.asarray(theta,float)


def _score_kwargs(config):
    d = config.design
    return {
        "config" : config.grasp_config(),
        "control_mode" : d.control_mode,
        "min_angle_deg" : d.min_finger_angle_deg,
        "floor" : d.score_floor,
        "workers" : config.run.workers
    }


def make_score_fn(config,suite,split="train"):
    """Score function over one split of a suite under a configuration."""
    seed = episode_seed(config)
    kwargs = _score_kwargs(config)
    def score_fn(theta):
        return score(pin(theta,config),suite,seed,split=split,**kwargs)
    return score_fn


def evaluate_design(theta,suite,config=None):
    """Train and test reports of one design.

    Returns:
        (ScoreReport, ScoreReport)
    """
    config = config if isinstance(config,RunConfig) else RunConfig(config)
    return evaluate_suite(pin(theta,config),suite,episode_seed(config),**_score_kwargs(config))


class LABORunner:
    """Executes one configured run.

    Args:
        config (RunConfig or dict): the run configuration
        out_dir (str, optional): overrides ``run.out_dir``
        suite (TaskSuite, optional): overrides the configured suite
    """
    def __init__(self,config,out_dir=None,suite=None):
        self.config = config if isinstance(config,RunConfig) else RunConfig(config)
        self.out_dir = out_dir if out_dir is not None else self.config.run.out_dir
        self.suite = suite if suite is not None else load_suite(self.config)
        self.layout = DesignLayout()
        self.seeds = SeedTree(self.config.run.seed)
        self.score_fn = make_score_fn(self.config,self.suite)
        self.log = None
        self.best = None
        self.best_rate = 0.0
        self.replay = []
        self.started = None

    def path(self,*parts):
        return os.path.join(self.out_dir,*parts)

    @property
    def n_evaluations(self):
        return len(self.log.of_type("evaluation"))

    def _start_log(self,resume):
        os.makedirs(self.path("checkpoints"),exist_ok=True)
        logfile = self.path("runlog.jsonl")
        state = self._read_state() if resume else None
        if state is not None:
            self.log = RunLog.reopen(logfile,state["n_records"])
        elif resume and os.path.isfile(logfile) and self.config.run.optimizer != "labo":
            old = RunLog.read(logfile)
            self._check_start(old)
            self.replay = [r.record_def for r in old if r.record_type == "evaluation"]
            self.log = RunLog.reopen(logfile,1)
        else:
            self.log = RunLog(logfile,'w')
            self.log.add("run_start",{
                "log_version" : LOG_VERSION,
                "optimizer" : self.config.run.optimizer,
                "config" : self.config.identity(),
                "suite_hash" : self.suite.content_hash(),
                "layout" : self.layout.schema()
            },"run started")
        for e in self.log.evaluations():
            self._track(e["F"],e["theta"],e["success_rate"])
        return state

    def _check_start(self,records):
        if not records or records[0].record_type != "run_start":
            raise ConfigError("run log does not start with a run_start record")
        if records[0].record_def["config"] != json.loads(dumps(self.config.identity())):
            raise ConfigError("run log was written with a different configuration")

    def _track(self,F,theta,rate):
        if self.best is None or F > self.best[0]:
            self.best = (float(F),np.asarray(theta,float))
        self.best_rate = max(self.best_rate,float(rate))

    def _replayed(self,theta):
        i = self.n_evaluations
        if i >= len(self.replay):
            return None
        e = self.replay[i]
        if not np.array_equal(np.asarray(e["theta"],float),theta):
            self.replay = []
            return None
        return e

    def evaluate(self,theta,iteration,f=None):
        """Scores one design, records it and returns (theta, ScoreReport).

        Evaluations that raise a toolkit error score the floor.
        """
        theta = pin(theta,self.config)
        stored = self._replayed(theta)
        failure = ""
        if stored is not None:
            report = ScoreReport(stored["F"],stored["cost"],np.zeros(0),np.asarray(stored["p"],int),
                                 np.asarray(stored["per_type_success_rate"]),stored["rejected"],stored["n_fingers"])
            failure = stored.get("failure","")
        else:
            try:
                report = self.score_fn(theta)
            except LABOError as err:
                floor = self.config.design.score_floor
                report = ScoreReport.floor(self.suite.n_tasks,floor,type(err).__name__)
                failure = str(err)
        self._track(report.F,theta,report.success_rate)
        self.log.add("evaluation",{
            "optimizer" : self.config.run.optimizer,
            "index" : self.n_evaluations,
            "iteration" : iteration,
            "theta" : theta,
            "f" : f,
            "F" : report.F,
            "p" : report.p,
            "cost" : report.cost,
            "success_rate" : report.success_rate,
            "per_type_success_rate" : report.per_type_success_rate,
            "rejected" : report.rejected,
            "n_fingers" : report.n_fingers,
            "failure" : failure,
            "best_F" : self.best[0],
            "best_success_rate" : self.best_rate,
            "wall_time" : time.perf_counter() - self.started
        },failure)
        return theta, report

    def run(self,resume=False):
        """Executes the run, writes every output file and returns the log.

        Args:
            resume (bool, optional): continue from the checkpoint in the
                output directory when there is one
        """
        self.started = time.perf_counter()
        state = self._start_log(resume)
        try:
            if self.config.run.optimizer == "labo":
                self._run_labo(state)
            else:
                self._run_baseline()
            self._finish()
        finally:
            self.log.close()
        return self.log

    def _run_baseline(self):
        c = self.config
        budget, seed = c.run.budget, c.run.seed
        dim = self.layout.dim
        def score_fn(theta):
            return self.evaluate(theta,self.n_evaluations + 1)[1]
        if c.run.optimizer == "uniform":
            trace = uniform_search(budget,seed,score_fn,dim,self.log)
        elif c.run.optimizer == "cmaes":
            trace = cmaes_search(budget,seed,score_fn,dim,c.cmaes.sigma0,c.cmaes.popsize,self.log)
        else:
            trace = raw_bo_search(budget,seed,score_fn,dim,c.surrogate_config(),self.log)
        self.log.add("trace",{"optimizer" : trace.optimizer, "evaluations" : len(trace),
                              "hash" : trace.content_hash(), "notes" : trace.notes})

    def _run_labo(self,state):
        c = self.config
        r = c.representation
        surrogate_config = c.surrogate_config()
        dim = self.layout.dim
        D = self.seeds.stream("pretrain-data").uniform(size=(r.n_pretrain,dim))
        if state is None:
            streams = {name : self.seeds.stream(name) for name in STREAMS}
            rep = Representation(dim,r.latent_dim,r.hidden,self.suite.n_tasks,r.kl_direction,r.kl_weight,rng=streams["init"])
            history = rep.pretrain(D,r.pretrain_steps,streams["epsilon"],r.batch_size,r.lr,
                                   log=self.log,every=max(r.pretrain_steps//10,1))
            self.log.add("pretrain",{
                "n_pretrain" : r.n_pretrain,
                "steps" : r.pretrain_steps,
                "loss" : history[-1][1] if history else None
            })
            Q = BODataset()
            surrogate = SurrogateLoop(surrogate_config,streams["gp-fit"],self.log)
            iteration = 0
            self._checkpoint(rep,Q,surrogate,streams,iteration)
        else:
            rep, _ = Representation.load(self.path("checkpoints","representation.npz"))
            Q = self._read_q()
            streams = {name : restore_generator(s) for name,s in state["streams"].items()}
            surrogate = SurrogateLoop(surrogate_config,streams["gp-fit"],self.log)
            surrogate.restore(state["surrogate"])
            iteration = state["iteration"]
        budget = c.run.budget
        while len(Q) < budget:
            remaining = budget - len(Q)
            if len(Q) < surrogate_config.n_init:
                source = "init"
                f = streams["init"].uniform(size=(min(surrogate_config.n_init - len(Q),remaining),r.latent_dim))
            else:
                source = "acquisition"
                surrogate.update(Q.inputs(),Q.targets())
                f = surrogate.propose(min(surrogate_config.n_candidates,remaining),streams["acquisition"],r.latent_dim)
            iteration += 1
            thetas = np.clip(rep.decode_latent(f),0.0,1.0)
            for fi,theta in zip(f,thetas):
                theta, report = self.evaluate(theta,iteration,fi)
                Q.add(fi,report.F,theta,report.p)
            if r.finetune_steps > 0:
                labeled = [LabeledDesign(e.theta,e.p,e.F) for e in Q.entries]
                rep.finetune(labeled,D,r.finetune_steps,streams["epsilon"],r.batch_size,r.lr,log=self.log)
                Q.reencode(rep.encode_mean)
            self.log.add("bo_iteration",{
                "iteration" : iteration,
                "source" : source,
                "evaluations" : len(Q),
                "best_F" : Q.best().F
            })
            if iteration % c.run.checkpoint_every == 0 or len(Q) >= budget:
                self._checkpoint(rep,Q,surrogate,streams,iteration)

    def _checkpoint(self,rep,Q,surrogate,streams,iteration):
        folder = self.path("checkpoints")
        rep_hash = rep.save(os.path.join(folder,"representation.npz"),{"iteration" : iteration})
        lines = [dumps(e.to_json()) for e in Q.entries]
        with open(os.path.join(folder,"Q.jsonl"),'w') as stream:
            stream.write("".join(line + "\n" for line in lines))
        self.log.add("checkpoint",{
            "iteration" : iteration,
            "representation_hash" : rep_hash,
            "q_hash" : hash_of(lines),
            "gp" : surrogate.state()
        })
        state = {
            "log_version" : LOG_VERSION,
            "config" : self.config.identity(),
            "iteration" : iteration,
            "n_records" : len(self.log),
            "streams" : {name : generator_state(s) for name,s in streams.items()},
            "surrogate" : surrogate.state()
        }
        target = os.path.join(folder,"state.json")
        with open(target + ".tmp",'w') as stream:
            stream.write(dumps(state))
        os.replace(target + ".tmp",target)

    def _read_state(self):
        target = self.path("checkpoints","state.json")
        if not os.path.isfile(target):
            return None
        with open(target,'r') as stream:
            state = json.load(stream)
        if state.get("log_version") != LOG_VERSION:
            raise ConfigError(f"checkpoint has log version {state.get('log_version')}, expected {LOG_VERSION}")
        if state["config"] != json.loads(dumps(self.config.identity())):
            raise ConfigError("checkpoint was written with a different configuration")
        return state

    def _read_q(self):
        Q = BODataset()
        with open(self.path("checkpoints","Q.jsonl"),'r') as stream:
            for line in stream:
                if line.strip():
                    Q.entries.append(BOEntry.from_json(json.loads(line)))
        return Q

    def _bins(self,tasks):
        return [complexity_bin(t.object) for t in tasks]

    def _finish(self):
        summary = {
            "log_version" : LOG_VERSION,
            "optimizer" : self.config.run.optimizer,
            "seed" : self.config.run.seed,
            "tag" : self.config.run.tag,
            "fixed_fingers" : self.config.design.fixed_fingers,
            "config" : self.config.snapshot(),
            "suite_hash" : self.suite.content_hash(),
            "task_types" : {
                "train" : [t.grasp_type for t in self.suite.tasks],
                "test" : [t.grasp_type for t in self.suite.test_tasks]
            },
            "task_bins" : {
                "train" : self._bins(self.suite.tasks),
                "test" : self._bins(self.suite.test_tasks)
            },
            "evaluations" : self.n_evaluations,
            "best_so_far" : self.log.best_so_far(),
            "best_F" : None,
            "best_theta" : None,
            "final" : None
        }
        if self.best is not None:
            F, theta = self.best
            train, test = evaluate_design(theta,self.suite,self.config)
            final = {
                "train" : {**report_row(train), "p" : train.p},
                "test" : {**report_row(test), "p" : test.p}
            }
            self.log.add("final_report",{"theta" : theta, **final},"best design on both splits")
            summary.update(best_F=F,best_theta=theta,final=final)
            write_theta(self.path("best_theta.txt"),theta)
        summary["runlog_hash"] = self.log.content_hash()
        with open(self.path("summary.json"),'w') as stream:
            stream.write(dumps(summary,indent=2))
        write_curve(self.path("curve.csv"),self.log.evaluations())


def write_theta(path,theta):
    """One value per line, exact round trip."""
    with open(path,'w') as stream:
        stream.write("".join(f"{float(v)!r}\n" for v in theta))


def read_theta(path):
    """Design vector from a file with one value per line.

    Raises:
        MalformedVector: if a line is not a number
    """
    with open(path,'r') as stream:
        text = stream.read()
    try:
        return np.array([float(x) for x in text.split()])
    except ValueError as ex:
        raise MalformedVector(f"{path} is not a list of numbers: {ex}") from ex


def write_curve(path,evaluations):
    with open(path,'w',newline='') as stream:
        writer = csv.writer(stream)
        writer.writerow(["evaluation","iteration","F","best_F","best_success_rate"])
        for e in evaluations:
            writer.writerow([e["index"],e["iteration"],repr(float(e["F"])),repr(float(e["best_F"])),repr(float(e["best_success_rate"]))])


def run(config,out_dir=None,resume=False,suite=None):
    """Runs a configuration end to end.

    Returns:
        RunLog
    """
    return LABORunner(config,out_dir,suite).run(resume)
