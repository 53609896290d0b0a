"""Exception types raised by the library; the CLI maps them to exit codes."""


class SubsetShapleyError(Exception):
    pass


class ArgumentError(SubsetShapleyError, ValueError):
    pass


class SchemaError(SubsetShapleyError, KeyError):
    def __str__(self):  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ParseError(SubsetShapleyError, ValueError):
    pass


class EmptyInputError(SubsetShapleyError, ValueError):
    pass


class CardinalityError(SubsetShapleyError, ValueError):
    pass


class CapacityError(SubsetShapleyError, ValueError):
    pass


class InfeasiblePlanError(SubsetShapleyError, ValueError):
    pass


class DegeneratePlanError(SubsetShapleyError, ValueError):
    pass
