"""Differentially private histogram publishing for event streams under
personalized w-event privacy requirements."""

from epdp.accountant import BudgetLedger, audit
from epdp.kernels import backend
from epdp.mechanisms import PBA, PBD, PLBU, UniformPublisher, dc, make_baseline
from epdp.metrics import ajsd, amre
from epdp.model import (
    BudgetGroups,
    Histogram,
    PrivacyRequirement,
    Publication,
    SlotDatabase,
    Stream,
    build_budget_groups,
)
from epdp.noise import RandomSource
from epdp.sampling import obs

__version__ = "0.1.0"

__all__ = [
    "PBA",
    "PBD",
    "PLBU",
    "BudgetGroups",
    "BudgetLedger",
    "Histogram",
    "PrivacyRequirement",
    "Publication",
    "RandomSource",
    "SlotDatabase",
    "Stream",
    "UniformPublisher",
    "ajsd",
    "amre",
    "audit",
    "backend",
    "build_budget_groups",
    "dc",
    "make_baseline",
    "obs",
]
