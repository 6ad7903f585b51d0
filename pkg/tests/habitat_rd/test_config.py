import dataclasses

import pytest

from habitat_rd.config import (
    builtin_config_text,
    builtin_solver_config,
    emit_config,
    energy_settings,
    mass_witness,
    parse_config,
    parse_param,
    to_checker_config,
    to_model,
    to_solver_config,
)
from habitat_rd.energy_diagnostics import (
    MassWitness,
)
from habitat_rd.enums import (
    BuiltinModel,
    LowerEntrySign,
)
from habitat_rd.errors import (
    ConfigParseError,
    ConfigSemanticError,
)
from habitat_rd.model import (
    builtin,
)
from habitat_rd.solver import (
    SolverConfig,
)
from habitat_rd.structure_checker import (
    CheckerConfig,
)
from ..utils.data import get_test_data

HEADER = """\
domain 1 = [0,2]
domain 2 = [1,3]
species 1 on 1 init const 1
species 2 on 2 init const 2
diffuse 1 = 0.1
diffuse 2 = 0.2
"""


def _parse_error(text):
    with pytest.raises(ConfigParseError) as err:
        parse_config(text)
    return err.value


def _semantic_error(text):
    with pytest.raises(ConfigSemanticError) as err:
        to_model(parse_config(text))
    return err.value


@pytest.mark.parametrize('name', [model.value for model in BuiltinModel])
def test_builtin_round_trip(name):
    document = parse_config(builtin_config_text(name))

    assert to_model(document) == builtin(name)
    assert to_solver_config(document) == builtin_solver_config(builtin(name))
    assert energy_settings(document) == ((2, 4), None, 10.0)


def test_builtin_round_trip_with_params():
    params = {'a': 2.5, 'dim': 1, 'd': (0.2, 0.1, 0.3)}
    model = to_model(parse_config(builtin_config_text('ex2', params)))
    assert model == builtin('ex2', params)
    assert model.dim == 1


def test_builtin_solver_config():
    assert builtin_solver_config(builtin('ex1')) == SolverConfig(
        dt=0.01, t_end=10.0, cells_per_axis=(32, 32)
    )
    assert builtin_solver_config(builtin('ex3')).cells_per_axis == (64,)


def test_emit_config_with_checker():
    text = emit_config(builtin('ex3'), checker_config=CheckerConfig(U_max=5.0, samples=7))
    document = parse_config(text)
    assert to_checker_config(document) == CheckerConfig(U_max=5.0, samples=7)
    with pytest.raises(ConfigSemanticError, match='missing solve'):
        to_solver_config(parse_config(emit_config(builtin('ex3')).replace('solve eps=0.001\n', '')))


def test_geometry_file_matches_builtin():
    document = parse_config(get_test_data('ex3_geometry.rd'))

    assert to_model(document) == dataclasses.replace(builtin('ex3'), name='custom')
    assert to_solver_config(document) == SolverConfig(dt=0.001, t_end=0.01, cells_per_axis=(32,))
    assert mass_witness(document) is None


def test_small_ex2_file():
    document = parse_config(get_test_data('ex2_small.rd'))
    model = to_model(document)

    assert model.name == 'ex2-1d'
    assert model.m == 3
    assert model == dataclasses.replace(builtin('ex2', {'dim': 1}), name='ex2-1d')
    assert to_solver_config(document).record_every == 5
    assert to_checker_config(document) == CheckerConfig(U_max=10.0, samples=16)
    assert energy_settings(document) == ((2, 4), None, 10.0)


def test_factor_exponents():
    document = parse_config(HEADER + 'react 2 += 1.0 * u1^1 u2^1 u1 gate 1 2\n')
    entry = document.reactions[0]
    assert entry.target == 2
    assert entry.factors == {1: 2, 2: 1}
    assert entry.gate == frozenset({1, 2})
    assert to_model(document).reaction.terms[0].exponents == (2, 1)


def test_gate_defaults_to_home_domain():
    model = to_model(parse_config(HEADER + 'react 2 += -0.5 * u2\n'))
    term = model.reaction.terms[0]
    assert term.gate == frozenset({2})
    assert term.target == 1


def test_constant_term():
    model = to_model(parse_config(HEADER + 'react 1 += 0.25 gate 1\n'))
    assert model.reaction.terms[0].exponents == (0, 0)


def test_region_diffusion():
    text = HEADER.replace('diffuse 1 = 0.1', 'diffuse 1 = 0.1 region 1,2 = 0.4 region 1 = 0.3')
    entry = to_model(parse_config(text)).diffusion.species[0]
    assert entry.base == 0.1
    assert entry.regions == ((frozenset({1, 2}), 0.4), (frozenset({1}), 0.3))


def test_gaussian_and_comments():
    text = HEADER.replace(
        'species 1 on 1 init const 1', 'species 1 on 1 init gauss 0.5 0.1 2  # bump'
    )
    init = to_model(parse_config('# leading comment\n\n' + text)).initial[0]
    assert init.center == (0.5,)
    assert init.width == 0.1
    assert init.amplitude == 2.0


def test_two_dimensional_domain():
    document = parse_config(
        'domain 1 = [0,2] x [0,1]\n'
        'species 1 on 1 init const 1\n'
        'diffuse 1 = 1\n'
    )
    assert document.domains[1][:2] == ((0.0, 0.0), (2.0, 1.0))


def test_keyed_sections():
    document = parse_config(
        HEADER
        + 'check Umax=4 samples=9 seed=2 lower=nonneg\n'
        + 'energy p=2 theta=1,2 bound=3\n'
        + 'mass b=1,2 K1=-0.5 K2=0.1\n'
    )
    assert to_checker_config(document) == CheckerConfig(
        U_max=4.0, samples=9, seed=2, lower=LowerEntrySign.NonNegative
    )
    assert energy_settings(document) == ((2,), (1.0, 2.0), 3.0)
    assert mass_witness(document) == MassWitness((1.0, 2.0), -0.5, 0.1)


def test_empty_file():
    with pytest.raises(ConfigSemanticError, match='no domains'):
        parse_config('')


def test_unknown_key_position():
    error = _parse_error(get_test_data('bad_key.rd'))
    assert error.line == 4
    assert error.column == 26
    assert 'speed' in error.message


def test_unknown_directive():
    error = _parse_error(HEADER + 'speed 3\n')
    assert (error.line, error.column) == (7, 1)


@pytest.mark.parametrize('line, column', [
    ('domain 3 = [0,a]', 12),
    ('domain 3 = (0,1)', 12),
    ('species 3 on 1 init flat 1', 21),
    ('react 1 += 1.0 * v2', 18),
    ('react 1 -= 1.0', 9),
    ('solve dt=fast T=1 cells=4', 10),
])
def test_parse_error_columns(line, column):
    error = _parse_error(HEADER + line + '\n')
    assert error.line == 7
    assert error.column == column


@pytest.mark.parametrize('extra, message', [
    ('domain 1 = [5,6]', 'duplicate domain'),
    ('species 3 on 4 init const 1\ndiffuse 3 = 1', 'unknown domain'),
    ('species 4 on 1 init const 1\ndiffuse 4 = 1', 'numbered'),
    ('species 3 on 1 init const 1', 'no diffusion'),
    ('react 1 += 1.0 gate 7', 'unknown domains'),
    ('react 3 += 1.0', 'unknown species'),
    ('react 1 += 1.0 * u9', 'unknown species'),
    ('solve dt=1 T=1 cells=4\nsolve dt=1 T=1 cells=4', 'duplicate solve'),
])
def test_semantic_errors(extra, message):
    with pytest.raises(ConfigSemanticError, match=message):
        parse_config(HEADER + extra + '\n')


def test_model_errors_point_at_the_reaction():
    error = _semantic_error(HEADER + 'react 1 += 1.0 * u2\nsolve dt=1 T=1 cells=4\n')
    assert error.line == 7
    assert 'outside its gate' in error.message
    assert error.directive == 'react 1 += 1.0 * u2'


def test_disjoint_habitats_are_rejected():
    text = HEADER.replace('domain 2 = [1,3]', 'domain 2 = [2,3]')
    error = _semantic_error(text + 'react 1 += 1.0 * u2 gate 1 2\n')
    assert 'does not meet' in error.message


def test_model_errors_in_species_lines():
    text = HEADER.replace('species 1 on 1 init const 1', 'species 1 on 1 init const -1')
    assert _semantic_error(text).line == 3


def test_solver_config_errors():
    document = parse_config(HEADER + 'solve dt=0 T=1 cells=4\n')
    with pytest.raises(ConfigSemanticError) as err:
        to_solver_config(document)
    assert err.value.line == 7
    with pytest.raises(ConfigSemanticError, match='solve needs'):
        to_solver_config(parse_config(HEADER + 'solve dt=0.1\n'))


def test_mass_needs_weights():
    with pytest.raises(ConfigSemanticError, match='mass needs'):
        mass_witness(parse_config(HEADER + 'mass K1=1\n'))


def test_parse_param():
    assert parse_param('dim=1') == ('dim', 1)
    assert parse_param('a=2.5') == ('a', 2.5)
    assert parse_param('d=0.1,0.2,0.3') == ('d', (0.1, 0.2, 0.3))
    with pytest.raises(ConfigParseError):
        parse_param('dim')
    with pytest.raises(ConfigParseError):
        parse_param('d=x,y')


def test_domain_errors_point_at_the_domain():
    error = _semantic_error(HEADER.replace('domain 1 = [0,2]', 'domain 1 = [2,0]'))
    assert error.line == 1
    assert error.directive == 'domain 1 = [2,0]'
    assert 'not below' in error.message


def test_gaussian_dimension_points_at_the_species():
    text = HEADER.replace('species 2 on 2 init const 2', 'species 2 on 2 init gauss 2 1 0.3 1')
    error = _semantic_error(text + 'solve dt=1 T=1 cells=4\n')
    assert error.line == 4
    assert 'gaussian center of species 2' in error.message
