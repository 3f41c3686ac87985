"""
Generic traversal of nested weight dataclasses.

Weight containers are frozen dataclasses whose fields hold tensors, other
containers, tuples of containers or ``None``. Names are the dotted field
path (tuple positions become numbers), so traversal order is the field
declaration order. Fields declared with ``metadata={'buffer': True}`` hold
non-trainable state; ``metadata={'static': True}`` fields are skipped.
"""

import dataclasses

from .tensor import Tensor

BUFFER = {'buffer': True}
STATIC = {'static': True}


def _children(node):
    if dataclasses.is_dataclass(node) and not isinstance(node, type):
        for field in dataclasses.fields(node):
            if field.metadata.get('static'):
                continue
            yield field.name, getattr(node, field.name), bool(field.metadata.get('buffer'))
    elif isinstance(node, (tuple, list)):
        for index, child in enumerate(node):
            yield str(index), child, False


def named_tensors(node, prefix='', buffer=False):
    """Yield (name, tensor, is_buffer) in deterministic traversal order."""
    if node is None:
        return
    if isinstance(node, Tensor):
        yield prefix, node, buffer
        return
    for name, child, is_buffer in _children(node):
        path = f"{prefix}.{name}" if prefix else name
        yield from named_tensors(child, path, buffer or is_buffer)


def named_parameters(node):
    for name, tensor, is_buffer in named_tensors(node):
        if not is_buffer:
            yield name, tensor


def parameter_count(node):
    """Number of trainable scalars (buffers excluded)."""
    return sum(tensor.size for _, tensor in named_parameters(node))


def map_tensors(node, fn, prefix='', buffer=False):
    """Return a copy of the tree with every tensor replaced by fn(name, tensor, is_buffer)."""
    if node is None:
        return None
    if isinstance(node, Tensor):
        return fn(prefix, node, buffer)
    if isinstance(node, (tuple, list)):
        return type(node)(
            map_tensors(child, fn, f"{prefix}.{index}" if prefix else str(index), buffer)
            for index, child in enumerate(node)
        )
    if dataclasses.is_dataclass(node):
        changes = {}
        for name, child, is_buffer in _children(node):
            path = f"{prefix}.{name}" if prefix else name
            changes[name] = map_tensors(child, fn, path, buffer or is_buffer)
        return dataclasses.replace(node, **changes)
    return node


def trees_equal(left, right):
    """Bitwise equality of two trees' names, shapes, precisions and contents."""
    left_items = list(named_tensors(left))
    right_items = list(named_tensors(right))
    if [name for name, _, _ in left_items] != [name for name, _, _ in right_items]:
        return False
    return all(a.equals(b) for (_, a, _), (_, b, _) in zip(left_items, right_items))
