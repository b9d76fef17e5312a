"""Vtrees: binary hierarchical partitions of the variable set.

A vtree certifies structured decomposability: a circuit whose every product
splits its scope along some vtree node is compatible with every other circuit
doing the same on the same vtree.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError


class Vtree:
    """Binary tree whose leaves are variable ids.

    Internal nodes carry left/right subtrees; every node knows its variable
    set as a bitmask over 0..D-1.
    """

    __slots__ = ("var", "left", "right", "mask")

    def __init__(self, var=None, left=None, right=None):
        if var is not None:
            if left is not None or right is not None:
                raise FormatError("vtree leaf cannot have children")
            self.var = int(var)
            self.left = None
            self.right = None
            self.mask = 1 << int(var)
        else:
            if left is None or right is None:
                raise FormatError("internal vtree node needs both children")
            self.var = None
            self.left = left
            self.right = right
            if left.mask & right.mask:
                raise FormatError("vtree children overlap")
            self.mask = left.mask | right.mask

    @property
    def is_leaf(self) -> bool:
        return self.var is not None

    def variables(self) -> list[int]:
        """Variable ids in left-to-right leaf order."""
        if self.is_leaf:
            return [self.var]
        return self.left.variables() + self.right.variables()

    def nodes(self):
        """All nodes, parents before children."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def splits(self) -> dict[int, tuple[int, int]]:
        """Map from internal-node mask to its (left mask, right mask) split."""
        out = {}
        for node in self.nodes():
            if not node.is_leaf:
                out[node.mask] = (node.left.mask, node.right.mask)
        return out

    def is_right_linear(self) -> bool:
        node = self
        while not node.is_leaf:
            if not node.left.is_leaf:
                return False
            node = node.right
        return True

    def __eq__(self, other):
        if not isinstance(other, Vtree):
            return NotImplemented
        if self.is_leaf or other.is_leaf:
            return self.var == other.var
        return (
            self.mask == other.mask
            and self.left == other.left
            and self.right == other.right
        )

    def __hash__(self):
        return hash((self.mask, self.var))

    def __repr__(self):
        if self.is_leaf:
            return f"Vtree(var={self.var})"
        return f"Vtree({self.left!r}, {self.right!r})"

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"var": self.var}
        return {"left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, data) -> "Vtree":
        if not isinstance(data, dict):
            raise FormatError("vtree node must be an object")
        if "var" in data:
            return cls(var=data["var"])
        if "left" in data and "right" in data:
            return cls(
                left=cls.from_dict(data["left"]),
                right=cls.from_dict(data["right"]),
            )
        raise FormatError("vtree node needs either 'var' or 'left'+'right'")


def right_linear_vtree(order) -> Vtree:
    """Chain vtree (v0, (v1, (..., vD-1))) following the given order."""
    order = list(order)
    if not order:
        raise FormatError("empty variable order")
    node = Vtree(var=order[-1])
    for var in reversed(order[:-1]):
        node = Vtree(left=Vtree(var=var), right=node)
    return node


def balanced_vtree(order) -> Vtree:
    order = list(order)
    if not order:
        raise FormatError("empty variable order")
    if len(order) == 1:
        return Vtree(var=order[0])
    mid = len(order) // 2
    return Vtree(left=balanced_vtree(order[:mid]), right=balanced_vtree(order[mid:]))


def random_vtree(n_vars: int, rng: np.random.Generator) -> Vtree:
    """Random binary partition tree over a random variable permutation."""
    order = [int(v) for v in rng.permutation(n_vars)]

    def build(vs):
        if len(vs) == 1:
            return Vtree(var=vs[0])
        cut = int(rng.integers(1, len(vs)))
        return Vtree(left=build(vs[:cut]), right=build(vs[cut:]))

    return build(order)


def right_linear_order(v: Vtree) -> list[int]:
    """Leaf order of a right-linear vtree; raises if v is not right-linear."""
    if not v.is_right_linear():
        raise FormatError("vtree is not right-linear")
    return v.variables()
