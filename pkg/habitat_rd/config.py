"""
Line-oriented problem configuration.

Usage:

1) Parse a file

    document = parse_config(open('ex2.rd').read())

2) Turn it into library objects

    model = to_model(document)
    solver_config = to_solver_config(document)

3) Emit the configuration of a built-in model

    print(builtin_config_text('ex2'))

Grammar (one directive per line, '#' starts a comment):

    name <text>
    domain <id> = [lo,hi](x[lo,hi])?
    species <k> on <domain> init const <v> | gauss <center...> <width> <amp>
    diffuse <k> = <value> (region <ids> = <value>)*
    react <k> += <coeff> (* u<j>[^<e>]...)? (gate <ids>)?
    solve dt=<v> T=<v> cells=<ints> eps=<v> tol=<v> record=<n> floor=<v>
    check Umax=<v> samples=<n> seed=<n> lower=any|nonneg
    energy p=<ints> theta=auto|<values> bound=<v>
    mass b=<values> K1=<v> K2=<v>
"""
import dataclasses
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from habitat_rd.energy_diagnostics import (
    MassWitness,
)
from habitat_rd.enums import (
    BuiltinModel,
    InitialKind,
    LowerEntrySign,
)
from habitat_rd.errors import (
    ConfigParseError,
    ConfigSemanticError,
    HabitatError,
)
from habitat_rd.geometry import (
    Domain,
    DomainSet,
)
from habitat_rd.model import (
    DEFAULT_EPSILON,
    DiffusionField,
    InitialCondition,
    ModelSpec,
    ReactionField,
    ReactionTerm,
    SpeciesDiffusion,
    SpeciesMap,
    builtin,
)
from habitat_rd.solver import (
    SolverConfig,
)
from habitat_rd.structure_checker import (
    CheckerConfig,
)

LOGGER = logging.getLogger(__name__)

TOKEN = re.compile(r'\S+')
INTERVAL = re.compile(r'\[\s*([^,\]\s]+)\s*,\s*([^\]\s]+)\s*\]')
FACTOR = re.compile(r'^u(\d+)(?:\^(\d+))?$')

# Cells per axis and time stepping of the built-in models.
BUILTIN_RUNS = {
    BuiltinModel.CrossSpeciesEpidemic: {'dt': 0.01, 'T': 10.0, 'cells': 32},
    BuiltinModel.OverlapBinding: {'dt': 1e-3, 'T': 2.0, 'cells': 64},
    BuiltinModel.QuadraticExchange1D: {'dt': 1e-3, 'T': 1.0, 'cells': 64},
}
BUILTIN_ENERGY_P = (2, 4)


@dataclass
class Directive:
    line: int
    text: str


@dataclass
class SpeciesEntry:
    domain: int
    kind: InitialKind
    values: Tuple[float, ...]
    where: Directive


@dataclass
class DiffuseEntry:
    base: float
    regions: Tuple[Tuple[frozenset, float], ...]
    where: Directive


@dataclass
class ReactEntry:
    target: int
    coeff: float
    factors: Dict[int, int]
    gate: Optional[frozenset]
    where: Directive


@dataclass
class ConfigDocument:
    name: Optional[str] = None
    domains: Dict[int, Tuple[Tuple[float, ...], Tuple[float, ...], Directive]] = field(default_factory=dict)
    species: Dict[int, SpeciesEntry] = field(default_factory=dict)
    diffusion: Dict[int, DiffuseEntry] = field(default_factory=dict)
    reactions: List[ReactEntry] = field(default_factory=list)
    solve: Dict[str, object] = field(default_factory=dict)
    check: Dict[str, object] = field(default_factory=dict)
    energy: Dict[str, object] = field(default_factory=dict)
    mass: Dict[str, object] = field(default_factory=dict)
    sections: Dict[str, Directive] = field(default_factory=dict)


#
# Value converters for key=value directives
#
def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    return int(text)


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.split(',') if v)


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in text.split(',') if v)


def _theta(text: str):
    return 'auto' if text == 'auto' else _floats(text)


def _lower(text: str) -> LowerEntrySign:
    return LowerEntrySign(text)


KEYED_SECTIONS = {
    'solve': {
        'dt': _float, 'T': _float, 'cells': _ints, 'eps': _float,
        'tol': _float, 'record': _int, 'floor': _float,
    },
    'check': {
        'Umax': _float, 'samples': _int, 'seed': _int, 'lower': _lower,
    },
    'energy': {
        'p': _ints, 'theta': _theta, 'bound': _float,
    },
    'mass': {
        'b': _floats, 'K1': _float, 'K2': _float,
    },
}


class _Parser:
    def __init__(self, text: str):
        self._text = text
        self._doc = ConfigDocument()

    def parse(self) -> ConfigDocument:
        for number, raw in enumerate(self._text.splitlines(), start=1):
            line = raw.split('#', 1)[0].rstrip()
            if not line.strip():
                continue
            tokens = [(t.group(), t.start() + 1) for t in TOKEN.finditer(line)]
            where = Directive(number, raw.strip())
            keyword = tokens[0][0]
            if keyword in KEYED_SECTIONS:
                self._keyed(keyword, tokens[1:], where)
            elif keyword in ('name', 'domain', 'species', 'diffuse', 'react'):
                getattr(self, f'_{keyword}')(line, tokens, where)
            else:
                raise ConfigParseError(f'unknown directive {keyword!r}', number, tokens[0][1])
        _validate(self._doc)
        return self._doc

    def _keyed(self, section: str, tokens, where: Directive):
        if section in self._doc.sections:
            raise ConfigSemanticError(f'duplicate {section} directive', where.line, where.text)
        self._doc.sections[section] = where
        values = getattr(self._doc, section)
        converters = KEYED_SECTIONS[section]
        for token, column in tokens:
            key, sep, value = token.partition('=')
            if not sep or not value:
                raise ConfigParseError(f'expected key=value, got {token!r}', where.line, column)
            if key not in converters:
                raise ConfigParseError(f'unknown key {key!r} in {section}', where.line, column)
            try:
                values[key] = converters[key](value)
            except ValueError:
                raise ConfigParseError(
                    f'bad value {value!r} for {key}', where.line, column + len(key) + 1
                ) from None

    @staticmethod
    def _number(token: str, where: Directive, column: int, cast=float):
        try:
            return cast(token)
        except ValueError:
            raise ConfigParseError(f'expected a number, got {token!r}', where.line, column) from None

    def _expect(self, tokens, index: int, word: str, where: Directive):
        if index >= len(tokens) or tokens[index][0] != word:
            column = tokens[index][1] if index < len(tokens) else len(where.text) + 1
            raise ConfigParseError(f'expected {word!r}', where.line, column)

    def _name(self, line: str, tokens, where: Directive):
        if len(tokens) != 2:
            raise ConfigParseError('expected: name <text>', where.line, tokens[0][1])
        self._doc.name = tokens[1][0]

    def _domain(self, line: str, tokens, where: Directive):
        if len(tokens) < 4:
            raise ConfigParseError('expected: domain <id> = [lo,hi]', where.line, 1)
        domain_id = self._number(tokens[1][0], where, tokens[1][1], int)
        self._expect(tokens, 2, '=', where)
        # tokens[2] is '=', the box starts right after it
        box_column = tokens[3][1]
        box = line[box_column - 1:]
        lo, hi = [], []
        position = 0
        while True:
            match = INTERVAL.match(box, position)
            if not match:
                raise ConfigParseError('expected [lo,hi]', where.line, box_column + position)
            column = box_column + match.start()
            lo.append(self._number(match.group(1), where, column))
            hi.append(self._number(match.group(2), where, column))
            position = match.end()
            rest = box[position:].lstrip()
            if not rest:
                break
            if rest[0] != 'x':
                raise ConfigParseError(
                    f'unexpected {rest.split()[0]!r}', where.line,
                    box_column + len(box) - len(rest),
                )
            position = len(box) - len(rest) + 1
            while position < len(box) and box[position].isspace():
                position += 1
        if domain_id in self._doc.domains:
            raise ConfigSemanticError(f'duplicate domain {domain_id}', where.line, where.text)
        self._doc.domains[domain_id] = (tuple(lo), tuple(hi), where)

    def _species(self, line: str, tokens, where: Directive):
        if len(tokens) < 6:
            raise ConfigParseError(
                'expected: species <k> on <domain> init const|gauss ...', where.line, 1
            )
        k = self._number(tokens[1][0], where, tokens[1][1], int)
        self._expect(tokens, 2, 'on', where)
        domain = self._number(tokens[3][0], where, tokens[3][1], int)
        self._expect(tokens, 4, 'init', where)
        kind_token, kind_column = tokens[5]
        try:
            kind = InitialKind(kind_token)
        except ValueError:
            raise ConfigParseError(
                f'unknown initial data {kind_token!r}', where.line, kind_column
            ) from None
        values = tuple(self._number(t, where, c) for t, c in tokens[6:])
        if kind == InitialKind.Constant and len(values) != 1:
            raise ConfigParseError('const takes one value', where.line, kind_column)
        if kind == InitialKind.Gaussian and len(values) < 3:
            raise ConfigParseError(
                'gauss takes <center...> <width> <amp>', where.line, kind_column
            )
        if k in self._doc.species:
            raise ConfigSemanticError(f'duplicate species {k}', where.line, where.text)
        self._doc.species[k] = SpeciesEntry(domain, kind, values, where)

    def _ids(self, tokens, start: int, where: Directive, stop_words=()) -> Tuple[frozenset, int]:
        ids = []
        index = start
        while index < len(tokens) and tokens[index][0] not in stop_words:
            token, column = tokens[index]
            for part in token.split(','):
                if part:
                    ids.append(self._number(part, where, column, int))
            index += 1
        if not ids:
            column = tokens[start][1] if start < len(tokens) else len(where.text) + 1
            raise ConfigParseError('expected domain ids', where.line, column)
        return frozenset(ids), index

    def _diffuse(self, line: str, tokens, where: Directive):
        if len(tokens) < 4:
            raise ConfigParseError('expected: diffuse <k> = <value>', where.line, 1)
        k = self._number(tokens[1][0], where, tokens[1][1], int)
        self._expect(tokens, 2, '=', where)
        base = self._number(tokens[3][0], where, tokens[3][1])
        regions = []
        index = 4
        while index < len(tokens):
            self._expect(tokens, index, 'region', where)
            ids, index = self._ids(tokens, index + 1, where, stop_words=('=',))
            self._expect(tokens, index, '=', where)
            if index + 1 >= len(tokens):
                raise ConfigParseError('missing region value', where.line, tokens[index][1])
            regions.append((ids, self._number(tokens[index + 1][0], where, tokens[index + 1][1])))
            index += 2
        if k in self._doc.diffusion:
            raise ConfigSemanticError(f'duplicate diffusion for species {k}', where.line, where.text)
        self._doc.diffusion[k] = DiffuseEntry(base, tuple(regions), where)

    def _react(self, line: str, tokens, where: Directive):
        if len(tokens) < 4:
            raise ConfigParseError('expected: react <k> += <coeff> ...', where.line, 1)
        k = self._number(tokens[1][0], where, tokens[1][1], int)
        self._expect(tokens, 2, '+=', where)
        coeff = self._number(tokens[3][0], where, tokens[3][1])
        index = 4
        factors: Dict[int, int] = {}
        if index < len(tokens) and tokens[index][0] == '*':
            index += 1
            while index < len(tokens) and tokens[index][0] != 'gate':
                token, column = tokens[index]
                match = FACTOR.match(token)
                if not match:
                    raise ConfigParseError(f'expected u<j>^<e>, got {token!r}', where.line, column)
                j = int(match.group(1))
                factors[j] = factors.get(j, 0) + int(match.group(2) or 1)
                index += 1
            if not factors:
                raise ConfigParseError('expected factors after *', where.line, tokens[index - 1][1])
        gate = None
        if index < len(tokens):
            self._expect(tokens, index, 'gate', where)
            gate, index = self._ids(tokens, index + 1, where)
        self._doc.reactions.append(ReactEntry(k, coeff, factors, gate, where))


def _validate(doc: ConfigDocument):
    if not doc.domains:
        raise ConfigSemanticError('no domains')
    if not doc.species:
        raise ConfigSemanticError('no species')

    for k, entry in sorted(doc.species.items()):
        if entry.domain not in doc.domains:
            raise ConfigSemanticError(
                f'species {k} lives on unknown domain {entry.domain}',
                entry.where.line, entry.where.text,
            )
    expected = list(range(1, len(doc.species) + 1))
    if sorted(doc.species) != expected:
        raise ConfigSemanticError(f'species must be numbered 1..{len(doc.species)}')

    for k in doc.species:
        if k not in doc.diffusion:
            raise ConfigSemanticError(f'no diffusion given for species {k}')
    for k, entry in doc.diffusion.items():
        if k not in doc.species:
            raise ConfigSemanticError(
                f'diffusion for unknown species {k}', entry.where.line, entry.where.text
            )
        for ids, _ in entry.regions:
            unknown = sorted(i for i in ids if i not in doc.domains)
            if unknown:
                raise ConfigSemanticError(
                    f'region refers to unknown domains {unknown}',
                    entry.where.line, entry.where.text,
                )

    for entry in doc.reactions:
        where = entry.where
        if entry.target not in doc.species:
            raise ConfigSemanticError(f'reaction for unknown species {entry.target}', where.line, where.text)
        unknown = sorted(j for j in entry.factors if j not in doc.species)
        if unknown:
            raise ConfigSemanticError(f'reaction reads unknown species {unknown}', where.line, where.text)
        if entry.gate is not None:
            unknown = sorted(g for g in entry.gate if g not in doc.domains)
            if unknown:
                raise ConfigSemanticError(f'gate refers to unknown domains {unknown}', where.line, where.text)


def parse_config(text: str) -> ConfigDocument:
    return _Parser(text).parse()


#
# Document -> library objects
#
def to_model(doc: ConfigDocument) -> ModelSpec:
    m = len(doc.species)
    where: Optional[Directive] = None
    try:
        boxes = []
        for domain_id, (lo, hi, where) in sorted(doc.domains.items()):
            boxes.append(Domain(domain_id, lo, hi))
        domains = DomainSet(boxes)
        sigma = tuple(doc.species[k].domain for k in range(1, m + 1))

        diffusion = []
        for k in range(1, m + 1):
            entry = doc.diffusion[k]
            where = entry.where
            diffusion.append(SpeciesDiffusion(entry.base, entry.regions))

        initial = []
        for k in range(1, m + 1):
            entry = doc.species[k]
            where = entry.where
            if entry.kind == InitialKind.Constant:
                initial.append(InitialCondition.constant(entry.values[0]))
            else:
                if len(entry.values) - 2 != domains.dim:
                    raise ConfigSemanticError(
                        f'gaussian center of species {k} has {len(entry.values) - 2} '
                        f'coordinates, the domains have {domains.dim}',
                        where.line, where.text,
                    )
                initial.append(InitialCondition.gaussian(
                    entry.values[:-2], entry.values[-2], entry.values[-1]
                ))

        where = doc.sections.get('solve')
        model = ModelSpec(
            domains,
            SpeciesMap(sigma, len(domains)),
            ReactionField(m, ()),
            DiffusionField(tuple(diffusion)),
            tuple(initial),
            doc.solve.get('eps', DEFAULT_EPSILON),
            doc.name or 'custom',
        )

        terms = []
        for entry in doc.reactions:
            where = entry.where
            gate = entry.gate if entry.gate is not None else frozenset([sigma[entry.target - 1]])
            exponents = [0] * m
            for j, power in entry.factors.items():
                exponents[j - 1] = power
            term = ReactionTerm(entry.target - 1, entry.coeff, gate, tuple(exponents))
            model.check_term(term)
            terms.append(term)
        return dataclasses.replace(model, reaction=ReactionField(m, tuple(terms)))
    except ConfigSemanticError:
        raise
    except HabitatError as err:
        raise ConfigSemanticError(
            str(err),
            where.line if where else 0,
            where.text if where else '',
        ) from err


def to_solver_config(doc: ConfigDocument) -> SolverConfig:
    if 'solve' not in doc.sections:
        raise ConfigSemanticError('missing solve directive')
    where = doc.sections['solve']
    solve = doc.solve
    missing = [key for key in ('dt', 'T', 'cells') if key not in solve]
    if missing:
        raise ConfigSemanticError(f'solve needs {missing}', where.line, where.text)
    try:
        return SolverConfig(
            dt=solve['dt'],
            t_end=solve['T'],
            cells_per_axis=solve['cells'],
            linear_tol=solve.get('tol', 1e-10),
            record_every=solve.get('record', 1),
            nonneg_floor=solve.get('floor', 1e-8),
        )
    except HabitatError as err:
        raise ConfigSemanticError(str(err), where.line, where.text) from err


def to_checker_config(doc: ConfigDocument) -> CheckerConfig:
    check = doc.check
    defaults = CheckerConfig()
    try:
        return CheckerConfig(
            U_max=check.get('Umax', defaults.U_max),
            samples=check.get('samples', defaults.samples),
            seed=check.get('seed', defaults.seed),
            lower=check.get('lower', defaults.lower),
        )
    except HabitatError as err:
        where = doc.sections['check']
        raise ConfigSemanticError(str(err), where.line, where.text) from err


def energy_settings(doc: ConfigDocument) -> Tuple[Tuple[int, ...], Optional[Tuple[float, ...]], float]:
    """(orders p, per-species θ or None for auto, boundedness factor)."""
    energy = doc.energy
    theta = energy.get('theta', 'auto')
    return (
        tuple(energy.get('p', ())),
        None if theta == 'auto' else tuple(theta),
        energy.get('bound', 10.0),
    )


def mass_witness(doc: ConfigDocument) -> Optional[MassWitness]:
    if 'mass' not in doc.sections:
        return None
    where = doc.sections['mass']
    if 'b' not in doc.mass:
        raise ConfigSemanticError('mass needs b=<values>', where.line, where.text)
    try:
        return MassWitness(doc.mass['b'], doc.mass.get('K1', 0.0), doc.mass.get('K2', 0.0))
    except HabitatError as err:
        raise ConfigSemanticError(str(err), where.line, where.text) from err


#
# Library objects -> text
#
def _num(value: float) -> str:
    return repr(float(value))


def _list(values) -> str:
    return ','.join(str(v) if isinstance(v, int) else _num(v) for v in values)


def _ids_text(ids) -> str:
    return ' '.join(str(i) for i in sorted(ids))


def emit_config(model: ModelSpec,
                solver_config: Optional[SolverConfig] = None,
                checker_config: Optional[CheckerConfig] = None,
                energy_ps: Tuple[int, ...] = ()) -> str:
    lines = [f'name {model.name}']
    for domain in model.domains:
        box = 'x'.join(f'[{_num(lo)},{_num(hi)}]' for lo, hi in zip(domain.lo, domain.hi))
        lines.append(f'domain {domain.id} = {box}')

    for k, (domain_id, init) in enumerate(zip(model.species.sigma, model.initial), start=1):
        if init.kind == InitialKind.Constant:
            data = f'const {_num(init.value)}'
        else:
            center = ' '.join(_num(c) for c in init.center)
            data = f'gauss {center} {_num(init.width)} {_num(init.amplitude)}'
        lines.append(f'species {k} on {domain_id} init {data}')

    for k, entry in enumerate(model.diffusion.species, start=1):
        text = f'diffuse {k} = {_num(entry.base)}'
        for ids, value in entry.regions:
            text += f' region {_ids_text(ids)} = {_num(value)}'
        lines.append(text)

    for term in model.reaction.terms:
        text = f'react {term.target + 1} += {_num(term.coeff)}'
        factors = [f'u{j + 1}^{e}' for j, e in enumerate(term.exponents) if e > 0]
        if factors:
            text += ' * ' + ' '.join(factors)
        lines.append(f'{text} gate {_ids_text(term.gate)}')

    solve = [f'eps={_num(model.epsilon)}']
    if solver_config is not None:
        solve = [
            f'dt={_num(solver_config.dt)}',
            f'T={_num(solver_config.t_end)}',
            f'cells={_list(solver_config.cells_per_axis)}',
        ] + solve + [
            f'tol={_num(solver_config.linear_tol)}',
            f'record={solver_config.record_every}',
            f'floor={_num(solver_config.nonneg_floor)}',
        ]
    lines.append('solve ' + ' '.join(solve))

    if checker_config is not None:
        lines.append(
            f'check Umax={_num(checker_config.U_max)} samples={checker_config.samples} '
            f'seed={checker_config.seed} lower={checker_config.lower.value}'
        )
    if energy_ps:
        lines.append(f'energy p={_list(energy_ps)} theta=auto')
    return '\n'.join(lines) + '\n'


def builtin_solver_config(model: ModelSpec) -> SolverConfig:
    run = BUILTIN_RUNS[BuiltinModel(model.name)]
    return SolverConfig(
        dt=run['dt'],
        t_end=run['T'],
        cells_per_axis=(run['cells'],) * model.dim,
    )


def builtin_config_text(name: str, params: Optional[Mapping[str, object]] = None) -> str:
    model = builtin(name, params)
    return emit_config(model, builtin_solver_config(model), energy_ps=BUILTIN_ENERGY_P)


def parse_param(text: str) -> Tuple[str, object]:
    """'key=value' from the command line; value as int, float or float list."""
    key, sep, value = text.partition('=')
    if not sep or not key:
        raise ConfigParseError(f'expected key=value, got {text!r}', 0)
    for cast in (int, float):
        try:
            return key, cast(value)
        except ValueError:
            pass
    try:
        return key, _floats(value)
    except ValueError:
        raise ConfigParseError(f'bad value {value!r} for {key}', 0) from None
