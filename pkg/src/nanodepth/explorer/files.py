"""Text files for search spaces, constraints and search results."""
from __future__ import annotations

from ..arch.serialize import FormatError, _Fields, iter_lines, parse_fields, save_config
from .search import IndicatorConstraints, SearchResult
from .space import SearchSpace

SPACE_HEADER = "nanodepth-space v1"


def _ints(raw: str, lineno: int) -> tuple[int, ...]:
    """``"1,2,4"`` or an inclusive range ``"4..8"``."""
    try:
        if ".." in raw:
            lo, hi = raw.split("..")
            vals = tuple(range(int(lo), int(hi) + 1))
        else:
            vals = tuple(int(v) for v in raw.split(","))
    except ValueError:
        raise FormatError(f"line {lineno}: bad integer list {raw!r}") from None
    if not vals:
        raise FormatError(f"line {lineno}: empty value list")
    return vals


def dump_space(space: SearchSpace, constraints: IndicatorConstraints | None = None) -> str:
    j = lambda vals: ",".join(str(v) for v in vals)  # noqa: E731
    lines = [SPACE_HEADER, "[space]",
             f"input h={space.input_hw[0]} w={space.input_hw[1]}",
             f"stem values={j(space.stem_channels)}"]
    for i, counts in enumerate(space.module_counts, start=1):
        lines.append(f"block index={i} modules={j(counts)}")
    lines += [f"growth values={j(space.growth)}",
              f"expansion values={j(space.expansion)}",
              f"transition values={j(space.transition_channels)}",
              f"decoder kinds={j(space.decoder_kinds)} widths={j(space.decoder_width)}"]
    if constraints is not None:
        macs = "none" if constraints.macs_max is None else str(constraints.macs_max)
        lines += ["[constraints]",
                  f"indicator delta1_min={constraints.delta1_min!r} "
                  f"params_max={constraints.params_max} macs_max={macs}"]
    return "\n".join(lines) + "\n"


def parse_space(text: str) -> tuple[SearchSpace, IndicatorConstraints | None]:
    section = None
    kw: dict = {}
    blocks: list[tuple[int, ...]] = []
    constraints = None
    for lineno, kind, tokens in iter_lines(text, SPACE_HEADER):
        if kind in ("[space]", "[constraints]") and not tokens:
            section = kind[1:-1]
            continue
        f = _Fields(parse_fields(tokens, lineno), lineno)
        if section == "space":
            if kind == "input":
                kw["input_hw"] = (f.int("h"), f.int("w"))
            elif kind == "stem":
                kw["stem_channels"] = _ints(f.str("values"), lineno)
            elif kind == "block":
                if f.int("index") != len(blocks) + 1:
                    raise FormatError(f"line {lineno}: block index out of order")
                blocks.append(_ints(f.str("modules"), lineno))
            elif kind in ("growth", "expansion"):
                kw[kind] = _ints(f.str("values"), lineno)
            elif kind == "transition":
                kw["transition_channels"] = _ints(f.str("values"), lineno)
            elif kind == "decoder":
                kw["decoder_kinds"] = tuple(f.str("kinds").split(","))
                kw["decoder_width"] = _ints(f.str("widths"), lineno)
            else:
                raise FormatError(f"line {lineno}: unexpected {kind!r} in [space]")
        elif section == "constraints" and kind == "indicator":
            macs = f.str("macs_max")
            try:
                constraints = IndicatorConstraints(
                    delta1_min=f.float("delta1_min"), params_max=f.int("params_max"),
                    macs_max=None if macs == "none" else int(macs))
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
        else:
            raise FormatError(f"line {lineno}: unexpected {kind!r}")
        f.done()
    if blocks:
        kw["module_counts"] = tuple(blocks)
    try:
        return SearchSpace(**kw), constraints
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def load_space(path):
    with open(path, encoding="utf-8") as f:
        return parse_space(f.read())


def write_results(result: SearchResult, table_path, config_path=None) -> None:
    with open(table_path, "w") as f:
        f.write(f"status={result.status} evaluations={result.evaluations}\n")
        f.write(result.table())
    if config_path is not None and result.best is not None:
        save_config(result.best.config, config_path)
