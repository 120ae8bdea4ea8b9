"""The utils module holds the classes every other module of LABOToolkit leans
on: the error hierarchy, the structured event log and the seeded random
streams. All of them can be imported straight from LABOToolkit.

Both work:
    >>> log = LABOToolkit.utils.RecordSet()
    >>> log = LABOToolkit.RecordSet()
"""
import zlib
import hashlib
import numpy as np

class LABOError(Exception):
    """The error class for LABOToolkit.

    Raised for failures caused by the logic and internal workings of the
    toolkit (numerical breakdowns, inconsistent internal state).
    """
    def __init__(self,*args):
        super().__init__(*args)
        if args:
            self.message = args[0]
        else:
            self.message = None

    def __str__(self):
        if self.message:
            return f'{self.message}'
        return "There's an error within LABOToolkit"

class LABOClientError(Exception):
    """The error class for faulty input handed to the toolkit.

    Raised when the caller passes data that cannot be used, for example a
    parameter vector of the wrong length or an unreadable config file.
    """
    def __init__(self,*args):
        super().__init__(*args)
        if args:
            self.message = args[0]
        else:
            self.message = None

    def __str__(self):
        if self.message:
            return f'{self.message}'
        return "User has entered faulty data"

class MalformedVector(LABOClientError):
    """Parameter vector has the wrong length or leaves [0,1]."""

class UnsupportedMesh(LABOClientError):
    """Mesh file is not a watertight triangle mesh."""

class ConfigError(LABOClientError):
    """Configuration is missing, unreadable or invalid."""

class SchemaMismatch(LABOClientError):
    """Run logs written with incompatible log versions."""

class ShapeMismatch(LABOClientError):
    """Array widths do not match the network architecture."""

class MissingLabels(LABOClientError):
    """Labelled loss requested on unlabelled designs."""

class EmptyDataset(LABOClientError):
    """Training requested on an empty dataset."""

class GeometryError(LABOError):
    """Hand intersects itself before closing starts."""

class NonPositiveSigma(LABOError):
    """Standard deviation of the latent Gaussian is not positive."""

class UnsupportedSmoothness(LABOError):
    """Matern smoothness other than 1/2, 3/2 or 5/2."""

class SingularGram(LABOError):
    """Gram matrix stays singular after the full jitter schedule."""

class UnfittedModel(LABOError):
    """Posterior requested from a model without data."""

class DegenerateCovariance(LABOError):
    """CMA-ES covariance spectrum collapsed onto its floor."""


class Record:
    """A single entry of the structured event log. Every record has a type,
    a definition dictionary with stable field names and a free text comment.

    Example:
        >>> Record(record_type="gp_fit",record_def={"n" : 4},comments="")
    """
    def __init__(self,**kwargs):
        self.content = {}
        for x in ['record_type','record_def','comments']:
            try:
                self.content[x] = kwargs[x]
            except KeyError as e:
                raise LABOError(f"{x} should be present in Record arguments") from e

    @property
    def record_type(self):
        """str: the type tag of the record."""
        return self.content['record_type']

    @property
    def record_def(self):
        """dict: the payload of the record."""
        return self.content['record_def']

    def __str__(self):
        data = str(self.content)
        return data


class RecordSet:
    """Ordered collection of records. Library functions that do noteworthy
    work accept an optional RecordSet (conventionally called ``log``) and
    append records to it.

    Attributes:
        records (list): Records in the order they were added.

    Examples:
        >>> log = LABOToolkit.RecordSet()
        >>> log.add_comment("pretraining started")
    """
    def __init__(self):
        self.records = []

    def add_record(self,record):
        """Appends a record.

        Args:
            record (LABOToolkit.utils.Record): The record to be added

        Raises:
            LABOError: Raised if record is not of type Record
        """
        if not isinstance(record,Record):
            raise LABOError("record should be of type Record")
        self.records.append(record)

    def add(self,record_type:str,record_def:dict,comments:str=""):
        """Builds a record from its parts and appends it."""
        self.add_record(Record(
            record_type=record_type,
            record_def=record_def,
            comments=comments
        ))

    def add_comment(self,comments:str):
        """Adds a record with only descriptive text."""
        self.add("comment",None,comments)

    def of_type(self,record_type:str):
        """Returns the records carrying the given type tag."""
        return [x for x in self.records if x.record_type == record_type]

    def __len__(self):
        return len(self.records)

    def __str__(self):
        record_desc = "\n".join([x.__str__() for x in self.records]) if len(self.records) > 0 else ""
        return f"{record_desc}"


def maybe_log(log,record_type,record_def,comments=""):
    """Appends a record when a log is given, does nothing otherwise."""
    if log is not None:
        log.add(record_type,record_def,comments)


class SeedTree:
    """Hierarchical random streams derived from one root seed.

    Each named stream is seeded from ``(root, crc32(name))`` so the order in
    which streams are requested, or which thread requests them, cannot change
    the numbers a stream produces.

    Example:
        >>> seeds = SeedTree(7)
        >>> rng = seeds.stream("acquisition")
    """
    def __init__(self,root:int):
        self.root = int(root)

    def sequence(self,name:str,*index):
        """numpy SeedSequence for a named (and optionally indexed) stream."""
        key = (zlib.crc32(name.encode()),) + tuple(int(i) for i in index)
        return np.random.SeedSequence(entropy=self.root,spawn_key=key)

    def stream(self,name:str,*index):
        """Fresh generator for the named stream."""
        return np.random.Generator(np.random.PCG64(self.sequence(name,*index)))

    def integer(self,name:str,*index):
        """A 64-bit integer seed drawn from the named stream."""
        return int(self.sequence(name,*index).generate_state(1,np.uint64)[0])


def generator_state(rng):
    """JSON serialisable state of a numpy generator."""
    return rng.bit_generator.state

def restore_generator(state):
    """Generator rebuilt from generator_state output."""
    bitgen = getattr(np.random,state['bit_generator'])()
    bitgen.state = state
    return np.random.Generator(bitgen)

def content_hash(data:bytes):
    """SHA-256 hex digest of raw bytes."""
    return hashlib.sha256(data).hexdigest()
