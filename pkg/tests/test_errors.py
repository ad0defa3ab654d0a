from coefstab.errors import ConfigError, NotAdmissibleError, RangeError, \
        ReportError, ResolutionError, StageError
import pickle


def roundtrip(error):
    return pickle.loads(pickle.dumps(error))


def test_not_admissible_pickles():
    error = roundtrip(NotAdmissibleError(1.0))
    assert isinstance(error, NotAdmissibleError)
    assert error.witness == 1.0
    assert str(error) == 'pair is not admissible, witness angle 1.000000'

    assert roundtrip(NotAdmissibleError(None)).witness is None


def test_stage_error_pickles():
    cause = ResolutionError('h_band=0.1 must exceed twice the grid spacing')
    error = roundtrip(StageError('identity', cause))

    assert error.stage == 'identity'
    assert isinstance(error.cause, ResolutionError)
    assert str(error) == str(StageError('identity', cause))
    assert str(error).startswith('[identity] ResolutionError: ')


def test_stage_error_wrapping_not_admissible():
    error = roundtrip(StageError('sectors', NotAdmissibleError(0.5)))
    assert error.cause.witness == 0.5


def test_config_and_report_errors_keep_attributes():
    error = roundtrip(RangeError('grid.n_cells out of range', key='grid'))
    assert isinstance(error, RangeError)
    assert error.key == 'grid'
    assert str(error) == 'grid.n_cells out of range'

    assert roundtrip(ConfigError('bad')).key is None

    error = roundtrip(ReportError('cannot write', path='/tmp/x'))
    assert error.path == '/tmp/x'
    assert str(error) == 'cannot write'
