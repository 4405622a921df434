"""Spacelike-separation checks for a Bell-experiment timing and geometry
configuration.  Slack in nanoseconds is the primary output; an inequality
passes iff its slack is strictly positive.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

SPEED_OF_LIGHT_M_PER_NS = 0.299792458


@dataclass(frozen=True)
class TimingConfig:
    """Distances (m), effective optical paths (m), and delays (ns).

    Index 1 refers to Alice's side, 2 to Bob's.  ``len_sa``/``len_sb`` are
    effective optical path lengths and cannot be shorter than the
    straight-line distances.
    """

    dist_sa: float
    dist_sb: float
    len_sa: float
    len_sb: float
    t_e: float
    t_qrng1: float
    t_qrng2: float
    t_delay1: float
    t_delay2: float
    t_pc1: float
    t_pc2: float
    t_m1: float
    t_m2: float
    c: float = SPEED_OF_LIGHT_M_PER_NS

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name != "c" and value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.len_sa < self.dist_sa or self.len_sb < self.dist_sb:
            raise ValueError("optical path cannot be shorter than the straight line")

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TimingConfig":
        return cls(**obj)


def check_measurement_separation(cfg: TimingConfig) -> tuple[float, float]:
    """Slacks (ns) of the two measurement-vs-remote-setting inequalities.

    slack1 = (|SA|+|SB|)/c - [T_E - (L_SA-L_SB)/c + T_QRNG1 + T_Delay1 + T_PC1 + T_M2];
    slack2 is the mirror image with the path-difference sign flipped and
    party indices exchanged.  Both must be positive to pass.
    """
    lhs = (cfg.dist_sa + cfg.dist_sb) / cfg.c
    path_diff = (cfg.len_sa - cfg.len_sb) / cfg.c
    rhs1 = cfg.t_e - path_diff + cfg.t_qrng1 + cfg.t_delay1 + cfg.t_pc1 + cfg.t_m2
    rhs2 = cfg.t_e + path_diff + cfg.t_qrng2 + cfg.t_delay2 + cfg.t_pc2 + cfg.t_m1
    return lhs - rhs1, lhs - rhs2


def check_emission_separation(cfg: TimingConfig) -> tuple[float, float]:
    """Slacks (ns) of the pair-creation-vs-setting-choice inequalities:
    slack_A = |SA|/c - [L_SA/c - T_Delay1 - T_PC1], and symmetrically for B."""
    slack_a = cfg.dist_sa / cfg.c - (cfg.len_sa / cfg.c - cfg.t_delay1 - cfg.t_pc1)
    slack_b = cfg.dist_sb / cfg.c - (cfg.len_sb / cfg.c - cfg.t_delay2 - cfg.t_pc2)
    return slack_a, slack_b


def separation_report(cfg: TimingConfig) -> dict:
    """All four inequalities with their terms, slacks, and pass flags."""
    m1, m2 = check_measurement_separation(cfg)
    e1, e2 = check_emission_separation(cfg)
    path_diff = (cfg.len_sa - cfg.len_sb) / cfg.c
    checks = [
        {
            "name": "measurement_vs_setting_1",
            "terms": {
                "lightcone_ns": (cfg.dist_sa + cfg.dist_sb) / cfg.c,
                "budget_ns": cfg.t_e - path_diff + cfg.t_qrng1 + cfg.t_delay1
                             + cfg.t_pc1 + cfg.t_m2,
            },
            "slack_ns": m1,
        },
        {
            "name": "measurement_vs_setting_2",
            "terms": {
                "lightcone_ns": (cfg.dist_sa + cfg.dist_sb) / cfg.c,
                "budget_ns": cfg.t_e + path_diff + cfg.t_qrng2 + cfg.t_delay2
                             + cfg.t_pc2 + cfg.t_m1,
            },
            "slack_ns": m2,
        },
        {
            "name": "emission_vs_setting_a",
            "terms": {
                "lightcone_ns": cfg.dist_sa / cfg.c,
                "budget_ns": cfg.len_sa / cfg.c - cfg.t_delay1 - cfg.t_pc1,
            },
            "slack_ns": e1,
        },
        {
            "name": "emission_vs_setting_b",
            "terms": {
                "lightcone_ns": cfg.dist_sb / cfg.c,
                "budget_ns": cfg.len_sb / cfg.c - cfg.t_delay2 - cfg.t_pc2,
            },
            "slack_ns": e2,
        },
    ]
    for check in checks:
        check["pass"] = bool(check["slack_ns"] > 0.0)
    return {"config": cfg.to_json_dict(), "checks": checks,
            "all_pass": all(c["pass"] for c in checks)}
