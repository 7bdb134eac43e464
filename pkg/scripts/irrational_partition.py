"""Pieces and cylinder counts of the non-integer map [[3/2, sqrt 2], [1, -2]].

    python3 scripts/irrational_partition.py [--order 3] [--out out/sqrt2_example]
"""

import argparse
from pathlib import Path

from recurlab.config import write_json
from recurlab.partition import compute_pieces, partition_svg, refine_cylinders
from recurlab.torus_maps import MatrixTorusMap


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--order", type=int, default=3)
    ap.add_argument("--out", default="out/sqrt2_example")
    args = ap.parse_args()
    tmap = MatrixTorusMap.sqrt2_example()
    print("eigen moduli", [round(m, 10) for m in tmap.certificate.eigen_moduli])
    fam = compute_pieces(tmap)
    print(f"{fam.Q} pieces, total area {fam.total_area():.12f}")
    for p in fam.pieces:
        print(f"  piece {p.index}: offset {p.offset} area {p.region.area:.6f}")
    for n in range(1, args.order + 1):
        cyl = refine_cylinders(tmap, fam, n)
        print(f"order {n}: {len(cyl)} cylinders, "
              f"area {sum(c.region.area for c in cyl):.12f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "partition.json", fam.to_dict())
    (out / "partition.svg").write_text(partition_svg(fam), encoding="utf-8")
    print("wrote", out)


if __name__ == "__main__":
    main()
