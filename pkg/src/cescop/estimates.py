"""Result container shared by all constant formulas."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ConstantEstimate:
    """A computed characterising constant.

    ``value`` is an extended real; infinity means the underlying
    inequality or embedding fails.  ``case`` names the formula branch
    that produced the number.  ``terms`` holds labelled pieces (an
    integral part, a boundary part, factors of a product) so callers
    can see where the mass came from.  ``error_bound`` is a forward
    quadrature bound on the absolute error of ``value``; zero means
    exact up to float arithmetic.  ``notes`` carries warnings that do
    not invalidate the value.
    """

    value: float
    case: str = ""
    terms: tuple = ()
    error_bound: float = 0.0
    notes: tuple = ()

    def __float__(self) -> float:
        return float(self.value)

    def with_note(self, note: str) -> "ConstantEstimate":
        return replace(self, notes=self.notes + (note,))

    def with_case(self, case: str) -> "ConstantEstimate":
        return replace(self, case=case)
