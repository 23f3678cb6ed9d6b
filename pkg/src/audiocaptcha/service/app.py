"""HTTP front end: solving, alignment and scoring over JSON."""
from __future__ import annotations

import base64
import binascii

from fastapi import FastAPI, HTTPException

from ..audio_io import AudioError, parse_wav
from ..metrics import MetricsError, captcha_accuracy, digit_accuracy, dtw_align
from ..pipeline import PipelineError, label_name, solve_trace
from ..persistence import load_model
from .schemas import (AlignRequest, AlignResponse, Candidate, HealthResponse, ScoreRequest,
                      ScoreResponse, SolveRequest, SolveResponse)


def create_app(model=None, model_path=None) -> FastAPI:
    """Build the app around an in-memory model or one loaded from ``model_path``."""
    if model is None and model_path is not None:
        model = load_model(model_path)
    app = FastAPI(title="audiocaptcha")
    app.state.model = model

    @app.get("/health", response_model=HealthResponse)
    def health():
        m = app.state.model
        if m is None:
            return HealthResponse(status="ok", model_loaded=False)
        return HealthResponse(status="ok", model_loaded=True, classifier=m.kind,
                              cfg_sha256=m.feature_cfg.digest())

    @app.post("/solve", response_model=SolveResponse)
    def solve(req: SolveRequest):
        m = app.state.model
        if m is None:
            raise HTTPException(503, "no model loaded")
        try:
            clip = parse_wav(base64.b64decode(req.wav_base64, validate=True))
            trace = solve_trace(m, clip, m.feature_cfg, req.theta_start, req.theta_end)
        except (binascii.Error, AudioError, PipelineError) as exc:
            raise HTTPException(422, str(exc)) from exc
        cands = [Candidate(start_s=c.start_s, label=label_name(lab))
                 for c, lab in zip(trace.candidates, trace.labels)]
        return SolveResponse(digits="".join(str(d) for d in trace.digits), candidates=cands)

    @app.post("/align", response_model=AlignResponse)
    def align(req: AlignRequest):
        try:
            res = dtw_align(req.truth, req.prediction)
        except MetricsError as exc:
            raise HTTPException(422, str(exc)) from exc
        return AlignResponse(total_cost=res.total_cost, path_mean_cost=res.path_mean_cost,
                             path=[list(p) for p in res.path])

    @app.post("/score", response_model=ScoreResponse)
    def score(req: ScoreRequest):
        pairs = [(p.truth, p.prediction) for p in req.pairs]
        try:
            return ScoreResponse(digit_accuracy=digit_accuracy(pairs),
                                 captcha_accuracy=captcha_accuracy(pairs), n_pairs=len(pairs))
        except MetricsError as exc:
            raise HTTPException(422, str(exc)) from exc

    return app
