"""Exception types shared across the package."""


class GuardError(ValueError):
    """An input violates a precondition that would bias or invalidate a result."""


class LawError(GuardError):
    """The increment law lacks a property the caller requires."""


class BudgetError(GuardError):
    """An exact enumeration would exceed its work budget."""

    def __init__(self, required, budget):
        super().__init__(f"enumeration needs {required} assignments, budget is {budget}")
        self.required = required
        self.budget = budget
