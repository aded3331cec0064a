"""Server configuration. Unknown fields are refused, not ignored."""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field


class Precision(str, Enum):
    float32 = "float32"
    float16 = "float16"
    bfloat16 = "bfloat16"


class ShimConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    model_id: str
    device: str = "cpu"
    precision: Precision = Precision.float32
    port: int = Field(default=8741, ge=1, le=65535)
    max_batch: int = Field(default=8, ge=1)
