"""FastAPI application exposing restore/degrade/metrics/infer."""

from __future__ import annotations

import base64
import tempfile

from fastapi import FastAPI, HTTPException

from .. import nnexec
from ..config import Config, ConfigError
from ..degrade import DegradationOp, add_awgn, apply_operator, gaussian_kernel
from ..experiments import prior_label, run_restore, summary_csv
from ..imagebuf import ImageFormatError
from ..metrics import metric_report
from . import schemas

VERSION = "0.1.0"


def _bad_request(stage: str, exc: Exception):
    return HTTPException(status_code=400, detail=f"{stage}: {exc}")


def _degradation_from_spec(spec: schemas.DegradationSpec) -> DegradationOp:
    if spec.kind == "blur":
        return DegradationOp(
            kind="blur",
            kernel=gaussian_kernel(spec.kernel_size, spec.kernel_sigma),
            boundary=spec.boundary,
        )
    return DegradationOp(kind=spec.kind, boundary=spec.boundary)


def _load_model(prior: schemas.PriorSpec) -> "nnexec.ModelGraph | None":
    if prior.kind != "network":
        return None
    if prior.bundle_b64 is not None:
        with tempfile.NamedTemporaryFile(suffix=".dwb") as tmp:
            tmp.write(base64.b64decode(prior.bundle_b64))
            tmp.flush()
            return nnexec.load_bundle(tmp.name)
    if prior.bundle_path is None:
        raise ValueError("network prior requires bundle_path or bundle_b64")
    return nnexec.load_bundle(prior.bundle_path)


def create_app() -> FastAPI:
    app = FastAPI(title="diamond restoration service", version=VERSION)

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=VERSION)

    @app.post("/metrics", response_model=schemas.MetricsResponse)
    def metrics_endpoint(req: schemas.MetricsRequest) -> schemas.MetricsResponse:
        try:
            a = schemas.decode_image(req.image_a)
            b = schemas.decode_image(req.image_b)
            report = metric_report(a, b)
        except (ValueError, ImageFormatError) as exc:
            raise _bad_request("metrics", exc) from exc
        return schemas.MetricsResponse(
            rmse=report.rmse,
            psnr=report.psnr,
            psnr_infinite=report.psnr_infinite,
            ssim=report.ssim,
            csv_line=report.csv_line(),
        )

    @app.post("/degrade", response_model=schemas.DegradeResponse)
    def degrade_endpoint(req: schemas.DegradeRequest) -> schemas.DegradeResponse:
        try:
            img = schemas.decode_image(req.image)
            op = _degradation_from_spec(req.degradation)
            out = apply_operator(op, img)
            noise_sigma = 0.0
            if req.sigma255 > 0:
                out, level_map = add_awgn(out, req.sigma255, req.seed)
                noise_sigma = float(level_map.sigma.flat[0])
        except (ValueError, ImageFormatError) as exc:
            raise _bad_request("degrade", exc) from exc
        return schemas.DegradeResponse(image=schemas.encode_image(out), noise_sigma=noise_sigma)

    @app.post("/infer", response_model=schemas.InferResponse)
    def infer_endpoint(req: schemas.InferRequest) -> schemas.InferResponse:
        try:
            img = schemas.decode_image(req.image)
            model = _load_model(
                schemas.PriorSpec(kind="network", bundle_path=req.bundle_path,
                                  bundle_b64=req.bundle_b64)
            )
            out = nnexec.generator_forward(model, img)
        except (ValueError, ImageFormatError, nnexec.BundleError) as exc:
            raise _bad_request("infer", exc) from exc
        return schemas.InferResponse(image=schemas.encode_image(out))

    @app.post("/restore", response_model=schemas.RestoreResponse)
    def restore_endpoint(req: schemas.RestoreRequest) -> schemas.RestoreResponse:
        try:
            low = schemas.decode_image(req.input_image)
            reference = (
                schemas.decode_image(req.reference_image)
                if req.reference_image is not None
                else None
            )
            # Reuse the Config expansion path so service and CLI agree on
            # semantics; paths are not involved server-side.
            cfg = Config(
                task=req.task,
                input="<inline>",
                degradation_kind=req.degradation.kind,
                degradation_boundary=req.degradation.boundary,
                kernel_size=req.degradation.kernel_size,
                kernel_sigma=req.degradation.kernel_sigma,
                prior_kind=req.prior.kind,
                prior_sigma=req.prior.sigma,
                bundle=req.prior.bundle_path,
                mu=req.iterate.mu,
                upsilon=req.iterate.upsilon,
                step=tuple(req.iterate.step),
                delta=tuple(req.iterate.delta),
                epsilon=tuple(req.iterate.epsilon),
                outer_iters=req.iterate.outer_iters,
                tol=req.iterate.tol,
            )
            model = _load_model(req.prior)
            results = run_restore(cfg, low, reference, model)
        except (ConfigError, ImageFormatError, nnexec.BundleError) as exc:
            raise _bad_request("restore", exc) from exc
        except (ValueError, RuntimeError) as exc:
            raise _bad_request("restore", exc) from exc

        combos = []
        for res in results:
            last = res.trace.records[-1] if res.trace.records else None
            combos.append(
                schemas.ComboResultModel(
                    step=res.step,
                    delta=res.delta,
                    epsilon=res.epsilon,
                    k_used=res.k_used,
                    tag=res.tag(),
                    restored_image=schemas.encode_image(res.restored),
                    trace_csv=res.trace.to_csv(),
                    warm_start_mismatch=res.trace.warm_start_mismatch,
                    rmse=None if last is None else last.rmse,
                    psnr=None if last is None else last.psnr,
                    psnr_infinite=bool(last and last.rmse == 0.0),
                    ssim=None if last is None else last.ssim,
                )
            )
        return schemas.RestoreResponse(
            task=req.task,
            prior=prior_label(cfg),
            results=combos,
            summary_csv=summary_csv(cfg, results),
        )

    return app
