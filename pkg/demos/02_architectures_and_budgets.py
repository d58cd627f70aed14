"""Architecture zoo: shape traces, exact parameter/multiply budgets, fitting.

Run with: python3 demos/02_architectures_and_budgets.py
"""

from kwslite import (
    ARCHITECTURES,
    compare,
    fit_to_budget,
    format_report,
    get_arch,
    report,
    validate,
)
from kwslite.arch import Conv

LABELS = 4  # filler + 3 keywords

# every built-in architecture, traced layer by layer
for name in ARCHITECTURES:
    arch = get_arch(name, LABELS)
    trace = " -> ".join(
        f"{entry.name}:{'x'.join(str(d) for d in entry.shape)}" for entry in validate(arch)
    )
    print(f"{name:<14} {trace}")

print()

# exact counts, no estimates: params is what you store, multiplies is what
# one forward pass costs
for name in ("cnn-trad", "cnn-one"):
    print(f"--- {name} ---")
    print(format_report(report(get_arch(name, LABELS))))
    print()

# the single wide-in-time conv trades a little accuracy headroom for a large
# multiply reduction at roughly double the parameter density
result = compare(get_arch("cnn-trad", LABELS), get_arch("cnn-one", LABELS))
print(f"cnn-trad vs cnn-one: {result.multiply_ratio:.2f}x multiplies, "
      f"{result.param_ratio:.2f}x params")
print()

# when parameters are the scarce resource, search for the largest map count
# that still fits; the striding and pooling variants keep multiplies low
cap = 250_000
for name in ("cnn-tstride2", "cnn-tpool2"):
    best = fit_to_budget(lambda n, name=name: get_arch(name, LABELS, n), cap)
    maps = next(l.maps for l in best.layers if isinstance(l, Conv))
    rep = report(best)
    print(f"{name}: {maps} maps -> {rep.total.params:,} params, "
          f"{rep.total.multiplies:,} multiplies (cap {cap:,})")
