"""Regenerate the shipped backend profiles in src/pqcexpr/profiles/.

The three noisy profiles are synthetic stand-ins with distinct error
magnitudes; they are not snapshots of any real device.
"""
import json
from pathlib import Path

from pqcexpr.sim import noiseless_backend, synthetic_profile

OUT = Path(__file__).resolve().parents[1] / "src" / "pqcexpr" / "profiles"
CHAIN = [(i, i + 1) for i in range(9)]

PROFILES = [
    synthetic_profile("synth_guadalupe", CHAIN + [(2, 7)], t1=85.0, t2=95.0, sx_error=3.5e-4,
                      cx_error=1.1e-2, readout=0.025, seed=1),
    synthetic_profile("synth_mumbai", CHAIN + [(1, 6), (3, 8)], t1=110.0, t2=120.0,
                      sx_error=2.5e-4, cx_error=8e-3, readout=0.02, seed=2),
    synthetic_profile("synth_hanoi", CHAIN + [(0, 9), (4, 7)], t1=130.0, t2=140.0,
                      sx_error=2e-4, cx_error=6.5e-3, readout=0.013, seed=3),
]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for backend in [noiseless_backend(10)] + PROFILES:
        path = OUT / f"{backend.id}.json"
        path.write_text(json.dumps(backend.to_dict(), indent=1) + "\n")
        print("wrote", path)


if __name__ == "__main__":
    main()
