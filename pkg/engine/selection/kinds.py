"""Selection policy kinds."""

from enum import Enum


class PolicyKind(str, Enum):
    NONE = "none"  # vanilla BYOL, no additional positive
    TRACIN = "tracin"
    TRACIN_PRETRAINED = "tracin_pretrained"
    FEATURE_SIM = "feature_sim"
    FEATURE_SIM_PRETRAINED = "feature_sim_pretrained"
    RANDOM = "random"
    SUPERVISED_ORACLE = "supervised_oracle"

    @property
    def needs_reference(self) -> bool:
        return self in (PolicyKind.TRACIN_PRETRAINED, PolicyKind.FEATURE_SIM_PRETRAINED)

    @property
    def uses_tracin(self) -> bool:
        return self in (PolicyKind.TRACIN, PolicyKind.TRACIN_PRETRAINED)

    @property
    def uses_features(self) -> bool:
        return self in (PolicyKind.FEATURE_SIM, PolicyKind.FEATURE_SIM_PRETRAINED)
