"""Pattern export: CSV tables and SVG arrow plots in the egocentric plane."""

import io

from .errors import ConfigError

ENCODERS = ("context", "target")


def pattern_set(model, which):
    if which not in ENCODERS:
        raise ConfigError(f"unknown encoder {which!r}; choose from {', '.join(ENCODERS)}")
    enc = model.context_encoder if which == "context" else model.target_encoder
    return enc.patterns


def patterns_csv(patterns):
    P = patterns.patterns.data
    L = P.shape[1]
    out = io.StringIO()
    header = ["index", "lambda", "bias"]
    for k in range(1, L + 1):
        header += [f"x{k}", f"y{k}"]
    out.write(",".join(header) + "\n")
    for j in range(P.shape[0]):
        row = [str(j), repr(float(patterns.scale.data[j])), repr(float(patterns.bias.data[j]))]
        row += [repr(float(v)) for v in P[j].ravel()]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def patterns_svg(patterns, extent=6.0, title=""):
    """One arrow per pattern from its first to its last point; y points up."""
    if extent <= 0:
        raise ConfigError("plot extent must be positive")
    P = patterns.patterns.data
    e = float(extent)
    w = e / 300.0
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{-e:g} {-e:g} {2 * e:g} {2 * e:g}" '
        f'width="600" height="600">',
    ]
    if title:
        lines.append(f"<title>{title}</title>")
    lines += [
        "<defs>",
        '<marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" '
        'markerHeight="6" orient="auto-start-reverse">',
        '<path d="M 0 0 L 10 5 L 0 10 z" fill="steelblue"/>',
        "</marker>",
        "</defs>",
        f'<rect x="{-e:g}" y="{-e:g}" width="{2 * e:g}" height="{2 * e:g}" fill="white"/>',
        '<g transform="scale(1,-1)">',
        f'<line class="axis" x1="{-e:g}" y1="0" x2="{e:g}" y2="0" stroke="#bbb" '
        f'stroke-width="{w:g}"/>',
        f'<line class="axis" x1="0" y1="{-e:g}" x2="0" y2="{e:g}" stroke="#bbb" '
        f'stroke-width="{w:g}"/>',
    ]
    for j in range(P.shape[0]):
        (x1, y1), (x2, y2) = P[j, 0].tolist(), P[j, -1].tolist()
        lines.append(
            f'<line class="pattern" data-index="{j}" x1="{x1!r}" y1="{y1!r}" x2="{x2!r}" '
            f'y2="{y2!r}" stroke="steelblue" stroke-width="{2 * w:g}" '
            f'marker-end="url(#arrow)"/>')
    lines.append(f'<circle class="target" cx="0" cy="0" r="{6 * w:g}" fill="crimson"/>')
    lines += ["</g>", "</svg>"]
    return "\n".join(lines) + "\n"


def export_patterns(model, fmt, which, extent=6.0):
    patterns = pattern_set(model, which)
    if fmt == "csv":
        return patterns_csv(patterns)
    if fmt == "svg":
        return patterns_svg(patterns, extent, title=f"{which} patterns")
    raise ConfigError(f"unknown export format {fmt!r}; choose csv or svg")
