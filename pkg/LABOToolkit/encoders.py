"""Run logs, reports and checkpoints are JSON documents full of numpy values
and toolkit objects. This module provides the encoder that turns them into
plain JSON, a decorator that gives toolkit classes a ``to_json`` method, and
the canonical dump used for content hashes."""
import json
import dataclasses
from json import JSONEncoder
import numpy as np
from LABOToolkit.utils import Record, RecordSet, content_hash

def serialize(cls):
    """Decorator to make dataclasses serializable through RecordEncoder."""
    def to_json(self):
        """Plain dictionary of the dataclass fields."""
        return {f.name : getattr(self,f.name) for f in dataclasses.fields(self)}
    setattr(cls,'to_json',to_json)
    return cls

class RecordEncoder(JSONEncoder):
    """The custom encoder used to write records, reports and manifests.

    Supports toolkit classes decorated with ``serialize``, records and numpy
    types.
    """
    def default(self, o):
        """The function called when an object has to be serialized.

        Args:
            o: The object to be serialized
        """
        if hasattr(o,'to_json'):
            try:
                return o.to_json()
            except Exception as ex:
                raise TypeError("Unserializable LABOToolkit class") from ex
        if isinstance(o,Record):
            return o.content
        if isinstance(o,RecordSet):
            return [x.content for x in o.records]
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, (set,frozenset)):
            return sorted(o)
        if isinstance(o, tuple):
            return list(o)
        return super().default(o)

def dumps(obj,**kwargs):
    """json.dumps with RecordEncoder."""
    return json.dumps(obj,cls=RecordEncoder,**kwargs)

def canonical(obj):
    """Canonical JSON text: sorted keys, no whitespace, NaN rejected."""
    return json.dumps(obj,cls=RecordEncoder,sort_keys=True,separators=(',',':'),allow_nan=False)

def hash_of(obj):
    """Content hash of the canonical JSON form of obj."""
    return content_hash(canonical(obj).encode())
