"""Exact distances from the hypercube edge-orientation count to its candidate approximations."""

from ldnormal.experiments import hypercube_target_comparison

out = hypercube_target_comparison(3)
print(f"d_TV(W, P(1))               = {out['P1']:.5f}   (rate d 2^-d = {out['P1_bound']})")
print(f"d_TV(W, {out['fallback']['family']} matched)          = {out['fallback']['dtv']:.5f}   params {out['fallback']['params']}")
for key in ("M3_projected_exact", "M3_projected_printed"):
    print(f"d_TV(W, {key}) = {out[key]['dtv']:.5f}")
