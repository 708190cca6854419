"""Command-line interface: a thin client of the restoration service.

By default every subcommand talks to the FastAPI app in-process through
an ASGI transport (no server needed); pass --server http://host:port to
target a running instance instead (see ``diamond serve``). All file I/O
happens client-side: images and CSVs are written atomically, and a
deterministic run log records every effective parameter.

Subcommands: restore, sweep, degrade, metrics, infer, serve.
"""

from __future__ import annotations

import asyncio
import base64
import os

import click
import httpx

from .config import (
    Config,
    ConfigError,
    override,
    parse_config,
    serialize_config,
    _parse_float_list,
)
from .imagebuf import atomic_write_text, load_image, save_image
from .metrics import format_metric
from .service import app as service_app


class ServiceClient:
    """POSTs JSON to the service, in-process by default."""

    def __init__(self, server: str | None = None):
        self.server = server

    def call(self, path: str, payload: dict) -> dict:
        if self.server:
            resp = httpx.post(self.server.rstrip("/") + path, json=payload, timeout=600.0)
        else:
            resp = asyncio.run(self._call_inprocess(path, payload))
        if resp.status_code != 200:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise click.ClickException(str(detail))
        return resp.json()

    @staticmethod
    async def _call_inprocess(path: str, payload: dict) -> httpx.Response:
        transport = httpx.ASGITransport(app=service_app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://diamond.local", timeout=None
        ) as client:
            return await client.post(path, json=payload)


def _b64_of_image(path: str) -> str:
    from .imagebuf import rawf32_bytes

    return base64.b64encode(rawf32_bytes(load_image(path))).decode("ascii")


def _write_image_b64(payload: str, path: str) -> None:
    from .imagebuf import image_from_rawf32

    img = image_from_rawf32(base64.b64decode(payload))
    save_image(img, path)


def _config_from_options(config_path, **flags) -> Config:
    for key in ("step", "delta", "epsilon"):
        if flags.get(key) is not None:
            flags[key] = _parse_float_list("iterate", key, flags[key])
    try:
        if config_path:
            cfg = parse_config(config_path)
            return override(cfg, **flags)
        task = flags.pop("task", None)
        input_path = flags.pop("input", None)
        if not task or not input_path:
            raise ConfigError("either --config or both --task and --input are required")
        base = Config(task=task, input=input_path)
        # Re-resolve per-task defaults through the parser for consistency.
        from .config import parse_config_text

        cfg = parse_config_text(f"[run]\ntask = {task}\ninput = {input_path}\n")
        return override(cfg, **flags)
    except ConfigError as exc:
        raise click.ClickException(f"config: {exc}") from exc


def _restore_request(cfg: Config, inline_bundle: bool) -> dict:
    bundle_b64 = None
    bundle_path = cfg.bundle
    if inline_bundle and cfg.bundle:
        with open(cfg.bundle, "rb") as fh:
            bundle_b64 = base64.b64encode(fh.read()).decode("ascii")
        bundle_path = None
    return {
        "task": cfg.task,
        "input_image": _b64_of_image(cfg.input),
        "reference_image": _b64_of_image(cfg.reference) if cfg.reference else None,
        "degradation": {
            "kind": cfg.degradation_kind,
            "boundary": cfg.degradation_boundary,
            "kernel_size": cfg.kernel_size,
            "kernel_sigma": cfg.kernel_sigma,
        },
        "prior": {
            "kind": cfg.prior_kind,
            "sigma": cfg.prior_sigma,
            "bundle_path": bundle_path,
            "bundle_b64": bundle_b64,
        },
        "iterate": {
            "mu": cfg.mu,
            "upsilon": cfg.upsilon,
            "step": list(cfg.step),
            "delta": list(cfg.delta),
            "epsilon": list(cfg.epsilon),
            "outer_iters": cfg.outer_iters,
            "tol": cfg.tol,
        },
    }


def _write_restore_artifacts(cfg: Config, body: dict, sweep: bool) -> list:
    os.makedirs(cfg.output_dir, exist_ok=True)
    results = body["results"]
    written = []

    def out(name: str) -> str:
        return os.path.join(cfg.output_dir, name)

    log_lines = ["# diamond run log", ""]
    log_lines.append(serialize_config(cfg).rstrip("\n"))
    log_lines.append("")
    log_lines.append(f"prior = {body['prior']}")
    log_lines.append(f"combinations = {len(results)}")

    for res in results:
        suffix = f"_{res['tag']}" if sweep and len(results) > 1 else ""
        img_name = f"restored{suffix}.png"
        trace_name = f"trace{suffix}.csv"
        _write_image_b64(res["restored_image"], out(img_name))
        atomic_write_text(out(trace_name), res["trace_csv"])
        written.extend([img_name, trace_name])
        stats = []
        if res["rmse"] is not None:
            p = "inf" if res["psnr_infinite"] else format_metric(res["psnr"])
            stats = [
                f"rmse={format_metric(res['rmse'])}",
                f"psnr={p}",
                f"ssim={format_metric(res['ssim'])}",
            ]
        warm = " warm_start_mismatch" if res["warm_start_mismatch"] else ""
        log_lines.append(
            f"combo {res['tag']}: K_used={res['k_used']} {' '.join(stats)}{warm} "
            f"-> {img_name}, {trace_name}".rstrip()
        )

    atomic_write_text(out("summary.csv"), body["summary_csv"])
    written.append("summary.csv")
    atomic_write_text(out("run.log"), "\n".join(log_lines) + "\n")
    written.append("run.log")
    return written


_COMMON_RESTORE_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="Config file; explicit flags override its values."),
    click.option("--task", type=click.Choice(["denoise", "sr2x"]), default=None),
    click.option("--input", "input_", type=click.Path(), default=None),
    click.option("--reference", type=click.Path(), default=None),
    click.option("--output-dir", default=None),
    click.option("--seed", type=int, default=None),
    click.option("--profile", type=click.Choice(["abdominal", "oral"]), default=None),
    click.option("--degradation", "degradation_kind",
                 type=click.Choice(["identity", "blur", "sr2x_resample"]), default=None),
    click.option("--boundary", "degradation_boundary",
                 type=click.Choice(["replicate", "periodic"]), default=None),
    click.option("--kernel-size", type=int, default=None),
    click.option("--kernel-sigma", type=float, default=None),
    click.option("--sigma255", type=float, default=None),
    click.option("--prior", "prior_kind",
                 type=click.Choice(["identity", "gaussian_smooth", "network"]), default=None),
    click.option("--prior-sigma", type=float, default=None),
    click.option("--bundle", type=click.Path(), default=None),
    click.option("--mu", type=float, default=None),
    click.option("--upsilon", type=float, default=None),
    click.option("--step", default=None, help="Relaxation factor s (comma list sweeps)."),
    click.option("--delta", default=None, help="TV coupling rho (comma list sweeps)."),
    click.option("--epsilon", default=None, help="TV weight (comma list sweeps)."),
    click.option("--outer-iters", type=int, default=None),
    click.option("--tol", type=float, default=None),
    click.option("--server", default=None, help="Remote service URL; default in-process."),
    click.option("--send-bundle", is_flag=True, default=False,
                 help="Inline the weight bundle instead of passing its path."),
]


def _with_restore_options(fn):
    for opt in reversed(_COMMON_RESTORE_OPTIONS):
        fn = opt(fn)
    return fn


@click.group()
def main() -> None:
    """Plug-and-play image restoration engine."""


def _run_restore(sweep: bool, config_path, server, send_bundle, input_, **flags):
    cfg = _config_from_options(config_path, input=input_, **flags)
    try:
        cfg.validate_paths()
        combos = cfg.combos()
    except ConfigError as exc:
        raise click.ClickException(f"config: {exc}") from exc
    if not sweep and len(combos) > 1:
        raise click.ClickException(
            f"restore expects a single parameter combination, got {len(combos)}; "
            "use the sweep subcommand for lists"
        )
    client = ServiceClient(server)
    body = client.call("/restore", _restore_request(cfg, send_bundle))
    written = _write_restore_artifacts(cfg, body, sweep)
    click.echo(f"wrote {', '.join(written)} in {cfg.output_dir}")


@main.command()
@_with_restore_options
def restore(config_path, server, send_bundle, input_, **flags):
    """Restore one image with one parameter combination."""
    _run_restore(False, config_path, server, send_bundle, input_, **flags)


@main.command()
@_with_restore_options
def sweep(config_path, server, send_bundle, input_, **flags):
    """Restore over a Cartesian sweep of step/delta/epsilon lists."""
    _run_restore(True, config_path, server, send_bundle, input_, **flags)


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--input", "input_", type=click.Path(), default=None)
@click.option("--output", type=click.Path(), required=True)
@click.option("--kind", type=click.Choice(["identity", "blur", "sr2x_resample"]), default=None)
@click.option("--boundary", type=click.Choice(["replicate", "periodic"]), default=None)
@click.option("--kernel-size", type=int, default=None)
@click.option("--kernel-sigma", type=float, default=None)
@click.option("--sigma255", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--server", default=None)
def degrade(config_path, input_, output, kind, boundary, kernel_size, kernel_sigma,
            sigma255, seed, server):
    """Apply a degradation operator (plus optional AWGN) to an image."""
    if config_path:
        cfg = _config_from_options(
            config_path,
            degradation_kind=kind,
            degradation_boundary=boundary,
            kernel_size=kernel_size,
            kernel_sigma=kernel_sigma,
            sigma255=sigma255,
            seed=seed,
        )
        input_ = input_ or cfg.input
        kind, boundary = cfg.degradation_kind, cfg.degradation_boundary
        kernel_size, kernel_sigma = cfg.kernel_size, cfg.kernel_sigma
        sigma255, seed = cfg.sigma255, cfg.seed
    if not input_:
        raise click.ClickException("config: --input is required")
    payload = {
        "image": _b64_of_image(input_),
        "degradation": {
            "kind": kind or "identity",
            "boundary": boundary or "replicate",
            "kernel_size": kernel_size if kernel_size is not None else 3,
            "kernel_sigma": kernel_sigma if kernel_sigma is not None else 0.5,
        },
        "sigma255": sigma255 if sigma255 is not None else 0.0,
        "seed": seed if seed is not None else 0,
    }
    body = ServiceClient(server).call("/degrade", payload)
    _write_image_b64(body["image"], output)
    click.echo(f"wrote {output} (noise sigma {body['noise_sigma']:g})")


@main.command()
@click.argument("image_a", type=click.Path(exists=True))
@click.argument("image_b", type=click.Path(exists=True))
@click.option("--server", default=None)
def metrics(image_a, image_b, server):
    """Print "rmse,psnr,ssim" for an image pair."""
    body = ServiceClient(server).call(
        "/metrics", {"image_a": _b64_of_image(image_a), "image_b": _b64_of_image(image_b)}
    )
    click.echo(body["csv_line"])


@main.command()
@click.option("--input", "input_", type=click.Path(exists=True), required=True)
@click.option("--bundle", type=click.Path(exists=True), required=True)
@click.option("--output", type=click.Path(), required=True)
@click.option("--server", default=None)
@click.option("--send-bundle", is_flag=True, default=False)
def infer(input_, bundle, output, server, send_bundle):
    """Run the generator network once on an image."""
    payload = {"image": _b64_of_image(input_)}
    if send_bundle:
        with open(bundle, "rb") as fh:
            payload["bundle_b64"] = base64.b64encode(fh.read()).decode("ascii")
    else:
        payload["bundle_path"] = os.path.abspath(bundle)
    body = ServiceClient(server).call("/infer", payload)
    _write_image_b64(body["image"], output)
    click.echo(f"wrote {output}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the restoration service under uvicorn."""
    import uvicorn

    uvicorn.run("diamond.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
