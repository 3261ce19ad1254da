from .toy import ToyConfig, ToyEnv, dp_oracle
from .multilane import MultiLaneConfig, MultiLaneEnv

__all__ = ["ToyConfig", "ToyEnv", "dp_oracle", "MultiLaneConfig", "MultiLaneEnv"]
