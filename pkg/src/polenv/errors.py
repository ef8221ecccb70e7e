"""Exception types shared across the package.

Two failure modes are distinguished because the command line maps them to
different exit codes: contract violations (bad inputs, preconditions that do
not hold) and budget refusals (the requested computation is well posed but
exceeds a configured size limit).
"""


class ContractError(ValueError):
    """An input or precondition violates the documented contract."""


class BudgetError(RuntimeError):
    """The computation would exceed a configured work or size budget."""
