class CoefstabError(Exception):
    """ Base class of every error raised by `coefstab`. """


class InvalidResolutionError(CoefstabError, ValueError):
    pass


class MaskedValueError(CoefstabError, ValueError):
    """ A region mask touches nodes where the field is invalid. """


class ExponentError(CoefstabError, ValueError):
    pass


class GrammarError(CoefstabError, ValueError):
    """ A coefficient expression does not belong to the field grammar. """


class CoverageError(CoefstabError, ValueError):
    """ A grid node is not covered by any piece of a coefficient field. """


class ContinuityError(CoefstabError, ValueError):
    pass


class SpecificationError(CoefstabError, ValueError):
    """ Problem coefficients violate the sign or regularity assumptions. """


class AssemblyError(SpecificationError):
    """ The matrix coefficient is not Hermitian positive definite. """


class PreconditionError(CoefstabError, ValueError):
    pass


class ResolutionError(PreconditionError):
    """ A length scale is too small relative to the grid spacing. """


class RefusalError(PreconditionError):
    """ The requested quantity does not exist for the given input. """


class ResonanceError(CoefstabError, RuntimeError):
    """ The Dirichlet problem is numerically singular (vibrating). """


class NotAdmissibleError(RefusalError):
    def __init__(self, witness):
        message = 'pair is not admissible'
        if witness is not None:
            message += f', witness angle {witness:.6f}'
        super().__init__(message)
        self.witness = witness

    def __reduce__(self):
        return type(self), (self.witness,)


class DegenerateFieldError(CoefstabError, RuntimeError):
    pass


class DegenerateStratumError(CoefstabError, RuntimeError):
    pass


class DegenerateIdentityError(CoefstabError, ValueError):
    pass


class ChainError(CoefstabError, RuntimeError):
    """ An intermediate inequality of the stability chain failed. """


class EmptyReconstructionError(CoefstabError, RuntimeError):
    pass


class ConfigError(CoefstabError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key

    def __reduce__(self):
        return type(self), (self.args[0], self.key)


class RangeError(ConfigError):
    pass


class ReportError(CoefstabError, OSError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path

    def __reduce__(self):
        return type(self), (self.args[0], self.path)


class StageError(CoefstabError):
    """ Wraps an error raised inside one stage of an experiment. """

    def __init__(self, stage, cause):
        super().__init__(f'[{stage}] {type(cause).__name__}: {cause}')
        self.stage = stage
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.stage, self.cause)
