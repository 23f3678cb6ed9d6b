from typing import List, Optional

from pydantic import BaseModel, Field, field_validator

from ..segmenter import THETA_END, THETA_START


def _digit_string(v: str) -> str:
    v = v.strip()
    if not all(ch in "0123456789" for ch in v):
        raise ValueError("digit strings may only hold 0-9")
    return v


class HealthResponse(BaseModel):
    status: str
    model_loaded: bool
    classifier: Optional[str] = None
    cfg_sha256: Optional[str] = None


class SolveRequest(BaseModel):
    wav_base64: str = Field(description="RIFF/WAVE PCM16 file, base64 encoded")
    theta_start: float = Field(THETA_START, gt=0, le=1)
    theta_end: float = Field(THETA_END, gt=0, le=1)


class Candidate(BaseModel):
    start_s: float
    label: str


class SolveResponse(BaseModel):
    digits: str
    candidates: List[Candidate]


class AlignRequest(BaseModel):
    truth: str
    prediction: str

    _check = field_validator("truth", "prediction")(_digit_string)


class AlignResponse(BaseModel):
    total_cost: float
    path_mean_cost: float
    path: List[List[int]]


class ScoreRequest(BaseModel):
    pairs: List[AlignRequest] = Field(min_length=1)


class ScoreResponse(BaseModel):
    digit_accuracy: float
    captcha_accuracy: float
    n_pairs: int
