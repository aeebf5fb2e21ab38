"""
命令行界面
"""
import json
import traceback
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import click
import numpy as np
import pandas as pd
from rich.console import Console
from rich.markup import escape
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from .error_metrics import observed_rate
from .errors import (
    DegenerateInputError,
    LsqIgaError,
    MisalignedSubdomainError,
    NotBlockDiagonalError,
    NotPositiveDefiniteError,
)
from .forward import forward_convergence_study
from .inverse import inverse_parameter_sweep, schur_identity_check
from .linear_solve import DEFAULT_TOL
from .manufactured import example2_case
from .models import ControlSpace, ErrorReport, Rectangle, RunManifest, SchurCheck
from .reference_data import (
    DEFAULT_INVERSE_LEVEL,
    OBSERVATION_SQUARE,
    default_alpha2s,
    default_beta2s,
    default_forward_levels,
    default_gamma2s,
    lookup_forward,
    lookup_inverse,
)

console = Console()

OUTPUT_DIR = Path("output")

DEFAULT_ELL_RANGE = f"{min(default_forward_levels())}..{max(default_forward_levels())}"

EXIT_SOLVER = 3
EXIT_MISALIGNED = 4
EXIT_SCHUR = 5


# ---------- 参数解析 ----------

def _parse_ell_range(ctx: click.Context, param: click.Parameter, value: str) -> List[int]:
    """'3..6' 或 '4' → 细化层列表"""
    try:
        if ".." in value:
            lo, hi = (int(v) for v in value.split("..", 1))
        else:
            lo = hi = int(value)
    except ValueError:
        raise click.BadParameter(f"格式应为 LO..HI，得到 {value!r}", ctx=ctx, param=param)
    if lo < 0 or hi < lo:
        raise click.BadParameter(f"需要 0 ≤ LO ≤ HI，得到 {value!r}", ctx=ctx, param=param)
    return list(range(lo, hi + 1))


def _positive_floats(
    ctx: click.Context, param: click.Parameter, value: Tuple[float, ...]
) -> Tuple[float, ...]:
    """检查权重为正，重复值只保留第一次出现"""
    for v in value:
        if not v > 0:
            raise click.BadParameter(f"权重必须为正，得到 {v}", ctx=ctx, param=param)
    return tuple(dict.fromkeys(value))


def _positive_float(ctx: click.Context, param: click.Parameter, value: float) -> float:
    if not value > 0:
        raise click.BadParameter(f"必须为正，得到 {value}", ctx=ctx, param=param)
    return value


def _parse_gamma_rect(ctx: click.Context, param: click.Parameter, value: str) -> Rectangle:
    """'lo,hi' → 正方形观测区域 (lo,hi)²"""
    try:
        lo, hi = (float(v) for v in value.split(","))
    except ValueError:
        raise click.BadParameter(f"格式应为 lo,hi，得到 {value!r}", ctx=ctx, param=param)
    if not 0.0 <= lo < hi <= 1.0:
        raise click.BadParameter(f"需要 0 ≤ lo < hi ≤ 1，得到 {value!r}", ctx=ctx, param=param)
    return Rectangle.square(lo, hi)


def format_option(func: Any) -> Any:
    return click.option(
        "--format",
        "formats",
        type=click.Choice(["csv", "md"]),
        multiple=True,
        default=("csv", "md"),
        show_default=True,
        help="输出格式，可重复",
    )(func)


def common_options(func: Any) -> Any:
    """所有表格命令共用的输出与求解选项"""
    options = [
        click.option("--out", type=click.Path(file_okay=False, path_type=Path),
                     default=OUTPUT_DIR, show_default=True, help="输出目录"),
        click.option("--tol", type=float, default=DEFAULT_TOL, show_default=True,
                     callback=_positive_float, help="迭代精化的相对残差目标"),
        click.option("--timings", is_flag=True, help="在 CSV 中写入每个单元格的耗时"),
    ]
    for option in reversed(options):
        func = option(func)
    return format_option(func)


# ---------- 错误与退出码 ----------

@contextmanager
def exit_on_error() -> Iterator[None]:
    """把库中的异常映射为退出码"""
    try:
        yield
    except MisalignedSubdomainError as exc:
        console.print(f"[red]观测区域 Γ 未与节点对齐: {escape(str(exc))}[/red]")
        raise click.exceptions.Exit(EXIT_MISALIGNED)
    except (NotPositiveDefiniteError, NotBlockDiagonalError) as exc:
        console.print(f"[red]求解失败: {escape(str(exc))}[/red]")
        raise click.exceptions.Exit(EXIT_SOLVER)
    except LsqIgaError as exc:
        raise click.UsageError(str(exc))
    except (click.exceptions.Exit, click.ClickException):
        raise
    except Exception as e:
        console.print(f"[red]错误: {escape(str(e))}[/red]")
        # 不使用markup格式化traceback，避免括号冲突
        console.print("[dim]详细错误信息:[/dim]")
        console.print(traceback.format_exc(), style="dim", markup=False)
        raise click.exceptions.Exit(1)


def _check_stalled(reports: Sequence[ErrorReport], tol: float) -> None:
    stalled = [r for r in reports if r.stalled]
    if stalled:
        worst = max(r.residual or 0.0 for r in stalled)
        console.print(
            f"[bold red]⚠️  {len(stalled)} 个单元格的迭代精化未达到 tol={tol:.1e}"
            f"（最大相对残差 {worst:.2e}）[/bold red]"
        )
        raise click.exceptions.Exit(EXIT_SOLVER)


# ---------- 输出 ----------

def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.2e}"


def _deviation(value: float, reference: Optional[float]) -> Optional[float]:
    if reference is None:
        return None
    return value / reference - 1.0


def reports_frame(reports: Sequence[ErrorReport], with_timing: bool = False) -> pd.DataFrame:
    """每个单元格一行，列顺序固定"""
    return pd.DataFrame(
        [r.as_row(with_timing) for r in reports], columns=list(ErrorReport.CSV_COLUMNS)
    )


def _markdown_document(title: str, grid: pd.DataFrame, long: pd.DataFrame) -> str:
    """网格表（三位有效数字）加全精度明细表"""
    return "\n\n".join([
        f"## {title}",
        grid.to_markdown(floatfmt=".2e"),
        "## 全部数值",
        long.to_markdown(index=False, floatfmt=".17g"),
        "",
    ])


def write_outputs(
    out_dir: Path,
    stem: str,
    frame: pd.DataFrame,
    markdown: str,
    formats: Sequence[str],
) -> List[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out_dir / f"{stem}.csv"
        frame.to_csv(path, index=False)
        written.append(str(path))
    if "md" in formats:
        path = out_dir / f"{stem}.md"
        path.write_text(markdown, encoding="utf-8")
        written.append(str(path))
    for path_str in written:
        console.print(f"[green]✅ 已保存至: {path_str}[/green]")
    return written


def write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    manifest.outputs.append(str(path))
    path.write_text(json.dumps(manifest.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8")
    return path


@contextmanager
def cell_progress(description: str, total: int) -> Iterator[Any]:
    """逐单元格推进的进度条，产出每算完一格调用一次的回调"""
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task(f"[cyan]{description}", total=total)
        yield lambda _report: progress.advance(task)


# ---------- 正问题表格 ----------

def forward_grid(reports: Sequence[ErrorReport], alpha2s: Sequence[float]) -> pd.DataFrame:
    """行 ℓ、列 α² 的相对 full H² 误差表，末列 DoF"""
    frame = reports_frame(reports)
    grid = frame.pivot(index="ell", columns="alpha2", values="h2_full")[list(alpha2s)]
    grid.columns = [f"{a:.0e}" for a in alpha2s]
    grid["DoF"] = frame.groupby("ell")["dof"].first().astype(int)
    grid.index.name = "ℓ \\ α²"
    return grid


def _forward_reference_frame(reports: Sequence[ErrorReport]) -> pd.DataFrame:
    rows = []
    for r in reports:
        params = r.params
        reference = lookup_forward(params["p"], params["ell"], params["k"], params["alpha2"])
        rows.append({
            "ell": params["ell"],
            "alpha2": params["alpha2"],
            "dof": r.dof,
            "h2_full": r.h2_full,
            "reference": reference,
            "deviation": _deviation(r.h2_full, reference),
            "residual": r.residual,
        })
    return pd.DataFrame(rows)


def _print_forward_table(reports: Sequence[ErrorReport], alpha2s: Sequence[float], p: int) -> None:
    table = Table(title=f"相对 full H² 误差（p={p}）", show_header=True, header_style="bold magenta")
    table.add_column("ℓ", style="cyan", justify="right")
    for alpha2 in alpha2s:
        table.add_column(f"α²={alpha2:.0e}", justify="right")
    table.add_column("DoF", justify="right", style="dim")

    by_ell: Dict[int, Dict[float, ErrorReport]] = {}
    for r in reports:
        by_ell.setdefault(r.params["ell"], {})[r.params["alpha2"]] = r
    for ell, row in by_ell.items():
        cells = []
        for alpha2 in alpha2s:
            r = row[alpha2]
            reference = lookup_forward(p, ell, r.params["k"], alpha2)
            text = _fmt(r.h2_full)
            if reference is not None:
                text += f"\n[dim]参考 {_fmt(reference)}[/dim]"
            cells.append(text)
        dof = next(iter(row.values())).dof
        table.add_row(str(ell), *cells, str(dof))
    console.print(table)


# ---------- 反问题表格 ----------

def inverse_grid(
    reports: Sequence[ErrorReport], beta2s: Sequence[float], gamma2s: Sequence[float]
) -> pd.DataFrame:
    """行 β²、列 γ² 的相对误差 |u_h - u_d|_{H²} / |u_d|_{H²} 表"""
    frame = reports_frame(reports)
    grid = frame.pivot(index="beta2", columns="gamma2", values="h2_semi")
    grid = grid.loc[list(beta2s), list(gamma2s)]
    grid.columns = [f"{g:.0e}" for g in gamma2s]
    grid.index = [f"{b:.0e}" for b in beta2s]
    grid.index.name = "β² \\ γ²"
    return grid


def _inverse_reference_frame(reports: Sequence[ErrorReport], control: ControlSpace) -> pd.DataFrame:
    rows = []
    for r in reports:
        params = r.params
        reference = lookup_inverse(
            params["p"], params["ell"], params["k"], params["beta2"], params["gamma2"], control
        )
        rows.append({
            "beta2": params["beta2"],
            "gamma2": params["gamma2"],
            "h2_semi": r.h2_semi,
            "reference": reference,
            "deviation": _deviation(r.h2_semi, reference),
            "residual": r.residual,
        })
    return pd.DataFrame(rows)


def _print_inverse_table(
    reports: Sequence[ErrorReport],
    beta2s: Sequence[float],
    gamma2s: Sequence[float],
    control: ControlSpace,
) -> None:
    label = "q=p-3，ΔU_h ⊂ F_h" if control == ControlSpace.REDUCED else "q=p-1"
    table = Table(title=f"|u_h - u_d|_H² / |u_d|_H²（控制空间 {label}）", show_header=True, header_style="bold magenta")
    table.add_column("β² \\ γ²", style="cyan", justify="right")
    for gamma2 in gamma2s:
        table.add_column(f"{gamma2:.0e}", justify="right")

    cells = {(r.params["beta2"], r.params["gamma2"]): r for r in reports}
    for beta2 in beta2s:
        row = []
        for gamma2 in gamma2s:
            r = cells[(beta2, gamma2)]
            reference = lookup_inverse(
                r.params["p"], r.params["ell"], r.params["k"], beta2, gamma2, control
            )
            text = _fmt(r.h2_semi)
            if reference is not None:
                text += f"\n[dim]参考 {_fmt(reference)}[/dim]"
            row.append(text)
        table.add_row(f"{beta2:.0e}", *row)
    console.print(table)


# ---------- 命令 ----------

@click.group()
def main() -> None:
    """加权最小二乘 Poisson 正问题与源项反问题的样条 Galerkin 求解器"""


@main.command("table-forward")
@click.option("--p", type=click.IntRange(min=2), default=2, show_default=True, help="样条次数")
@click.option("--k", type=click.IntRange(min=1), default=1, show_default=True, help="人造解波数")
@click.option("--ell-range", default=DEFAULT_ELL_RANGE, show_default=True, callback=_parse_ell_range,
              help="细化层范围 LO..HI")
@click.option("--ell", type=click.IntRange(min=0), default=None, help="单个细化层（覆盖 --ell-range）")
@click.option("--alpha2", "alpha2s", type=float, multiple=True, callback=_positive_floats,
              help="边界权重 α²，可重复；默认 1e6 … 1e-6")
@common_options
def table_forward(
    p: int,
    k: int,
    ell_range: List[int],
    ell: Optional[int],
    alpha2s: Tuple[float, ...],
    out: Path,
    tol: float,
    timings: bool,
    formats: Tuple[str, ...],
) -> None:
    """正问题误差表：行 ℓ、列 α²、附 DoF 列"""
    levels = [ell] if ell is not None else ell_range
    alphas = list(alpha2s) or default_alpha2s()

    with exit_on_error():
        with cell_progress("求解正问题...", len(levels) * len(alphas)) as advance:
            reports = forward_convergence_study(p, k, levels, alphas, tol=tol, on_cell=advance)

    _print_forward_table(reports, alphas, p)
    grid = forward_grid(reports, alphas)
    details = _forward_reference_frame(reports)
    stem = f"forward_p{p}_k{k}"
    outputs = write_outputs(
        out, stem, reports_frame(reports, timings),
        _markdown_document(f"相对 full H² 误差（p={p}, k={k}）", grid, details), formats,
    )
    manifest = RunManifest(
        command="table-forward",
        params={"p": p, "k": k, "ells": levels, "alpha2s": alphas, "tol": tol,
                "formats": list(formats), "timings": timings},
        outputs=outputs,
        wall_time={f"ell={r.params['ell']},alpha2={r.params['alpha2']:g}": r.wall_time_s or 0.0
                   for r in reports},
    )
    write_manifest(out, manifest)
    _check_stalled(reports, tol)


@main.command("table-inverse")
@click.option("--p", type=click.IntRange(min=2), default=2, show_default=True, help="样条次数")
@click.option("--k", type=click.IntRange(min=1), default=1, show_default=True, help="u_d 的波数")
@click.option("--ell", type=click.IntRange(min=0), default=DEFAULT_INVERSE_LEVEL, show_default=True,
              help="细化层")
@click.option("--beta2", "beta2s", type=float, multiple=True, callback=_positive_floats,
              help="先验权重 β²，可重复；默认 1, 1e-2, 1e-4")
@click.option("--gamma2", "gamma2s", type=float, multiple=True, callback=_positive_floats,
              help="PDE 权重 γ²，可重复；默认 1, 1e2, 1e4")
@click.option("--control-space", type=click.Choice([c.value for c in ControlSpace]),
              default=ControlSpace.REDUCED.value, show_default=True, help="控制空间")
@click.option("--both", is_flag=True, help="两种控制空间都算")
@click.option("--gamma-rect", default=",".join(str(v) for v in OBSERVATION_SQUARE), show_default=True,
              callback=_parse_gamma_rect, help="观测区域 (lo,hi)²")
@click.option("--prior", type=click.Choice(["exact", "zero"]), default="exact", show_default=True,
              help="先验 f_p：-Δu_d 或 0")
@common_options
def table_inverse(
    p: int,
    k: int,
    ell: int,
    beta2s: Tuple[float, ...],
    gamma2s: Tuple[float, ...],
    control_space: str,
    both: bool,
    gamma_rect: Rectangle,
    prior: str,
    out: Path,
    tol: float,
    timings: bool,
    formats: Tuple[str, ...],
) -> None:
    """反问题 (β², γ²) 误差网格"""
    betas = list(beta2s) or default_beta2s()
    gammas = list(gamma2s) or default_gamma2s()
    controls = list(ControlSpace) if both else [ControlSpace(control_space)]
    case = example2_case(k, zero_prior=prior == "zero")

    all_reports: List[ErrorReport] = []
    outputs: List[str] = []
    wall_time: Dict[str, float] = {}
    for control in controls:
        with exit_on_error():
            with cell_progress(f"求解反问题（{control.value}）...", len(betas) * len(gammas)) as advance:
                reports = inverse_parameter_sweep(
                    p, ell, k, betas, gammas, control,
                    gamma_rect=gamma_rect, tol=tol, case=case, on_cell=advance,
                )
        _print_inverse_table(reports, betas, gammas, control)
        grid = inverse_grid(reports, betas, gammas)
        details = _inverse_reference_frame(reports, control)
        stem = f"inverse_{control.value}_p{p}_l{ell}_k{k}"
        outputs += write_outputs(
            out, stem, reports_frame(reports, timings),
            _markdown_document(f"|u_h - u_d|_H² / |u_d|_H²（{control.value}, p={p}, ℓ={ell}, k={k}）", grid, details),
            formats,
        )
        for r in reports:
            key = f"{control.value},beta2={r.params['beta2']:g},gamma2={r.params['gamma2']:g}"
            wall_time[key] = r.wall_time_s or 0.0
        all_reports += reports

    manifest = RunManifest(
        command="table-inverse",
        params={"p": p, "k": k, "ell": ell, "beta2s": betas, "gamma2s": gammas,
                "control_spaces": [c.value for c in controls],
                "gamma_rect": [list(gamma_rect.x), list(gamma_rect.y)], "prior": prior,
                "tol": tol, "formats": list(formats), "timings": timings},
        outputs=outputs,
        wall_time=wall_time,
    )
    write_manifest(out, manifest)
    _check_stalled(all_reports, tol)


@main.command("schur-check")
@click.option("--p", type=click.IntRange(min=2), default=2, show_default=True, help="样条次数")
@click.option("--ell", type=click.IntRange(min=0, max=3), default=2, show_default=True,
              help="细化层（稠密计算，≤ 3）")
@click.option("--control-space", type=click.Choice(["max", "reduced", "both"]), default="both",
              show_default=True, help="控制空间")
@click.option("--seed", type=int, default=0, show_default=True, help="随机向量种子")
@click.option("--num-random", type=click.IntRange(min=0), default=50, show_default=True,
              help="基向量之外的随机向量个数")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=OUTPUT_DIR,
              show_default=True, help="输出目录")
def schur_check(p: int, ell: int, control_space: str, seed: int, num_random: int, out: Path) -> None:
    """验证包含条件下 AᵀM_f⁻¹A 等于 Laplace Gramian"""
    if control_space == "both":
        controls = [ControlSpace.REDUCED, ControlSpace.MAX]
    else:
        controls = [ControlSpace(control_space)]

    checks: List[SchurCheck] = []
    with exit_on_error():
        for control in controls:
            checks.append(schur_identity_check(p, ell, control, seed=seed, num_random=num_random))

    table = Table(title=f"AᵀM_f⁻¹A 与 ‖Δu_h‖²（p={p}, ℓ={ell}）", show_header=True,
                  header_style="bold magenta")
    table.add_column("控制空间", style="cyan")
    table.add_column("包含条件", justify="center")
    table.add_column("最大相对间隙", justify="right")
    table.add_column("上界成立", justify="center")
    table.add_column("向量数", justify="right", style="dim")
    table.add_column("结果", justify="center")
    for check in checks:
        table.add_row(
            check.control_space.value,
            "是" if check.is_containment else "否",
            f"{check.max_relative_gap:.3e}",
            "是" if check.upper_bound_holds else "否",
            str(check.num_vectors),
            "[green]通过[/green]" if check.passed else "[red]失败[/red]",
        )
    console.print(table)

    frame = pd.DataFrame([c.to_dict() for c in checks])
    outputs = write_outputs(out, f"schur_p{p}_l{ell}", frame, "", ["csv"])
    manifest = RunManifest(
        command="schur-check",
        params={"p": p, "ell": ell, "control_spaces": [c.value for c in controls],
                "seed": seed, "num_random": num_random},
        outputs=outputs,
    )
    write_manifest(out, manifest)

    if not all(c.passed for c in checks):
        console.print("[bold red]❌ Schur 恒等式检查失败[/bold red]")
        raise click.exceptions.Exit(EXIT_SCHUR)
    console.print("[bold green]✨ Schur 恒等式检查通过[/bold green]")


@main.command("rates")
@click.option("--p", type=click.IntRange(min=2), default=2, show_default=True, help="样条次数")
@click.option("--k", type=click.IntRange(min=1), default=1, show_default=True, help="人造解波数")
@click.option("--ell-range", default=DEFAULT_ELL_RANGE, show_default=True, callback=_parse_ell_range,
              help="细化层范围 LO..HI")
@click.option("--alpha2", type=float, default=1.0, show_default=True, callback=_positive_float,
              help="取哪一列 α²")
@click.option("--from-csv", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None,
              help="从 table-forward 的 CSV 读取误差，不重新求解")
@click.option("--tol", type=float, default=DEFAULT_TOL, show_default=True, callback=_positive_float,
              help="迭代精化的相对残差目标")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=OUTPUT_DIR,
              show_default=True, help="输出目录")
def rates(
    p: int,
    k: int,
    ell_range: List[int],
    alpha2: float,
    from_csv: Optional[Path],
    tol: float,
    out: Path,
) -> None:
    """full H² 误差的观测收敛阶 log₂(e_ℓ / e_{ℓ+1})"""
    if from_csv is not None:
        frame = pd.read_csv(from_csv)
        missing = {"ell", "alpha2", "h2_full"} - set(frame.columns)
        if missing:
            raise click.BadParameter(f"CSV 缺少列 {sorted(missing)}", param_hint="--from-csv")
        column = frame[np.isclose(frame["alpha2"], alpha2, rtol=1e-12, atol=0.0)].sort_values("ell")
        if column.empty:
            raise click.BadParameter(f"CSV 中没有 α²={alpha2:g} 的数据", param_hint="--from-csv")
        levels = [int(v) for v in column["ell"]]
        errors = [float(v) for v in column["h2_full"]]
    else:
        with exit_on_error():
            with cell_progress("求解正问题...", len(ell_range)) as advance:
                reports = forward_convergence_study(p, k, ell_range, [alpha2], tol=tol, on_cell=advance)
        levels = [int(r.params["ell"]) for r in reports]
        errors = [r.h2_full for r in reports]

    try:
        observed = observed_rate(errors)
    except DegenerateInputError as exc:
        raise click.UsageError(str(exc))

    table = Table(title=f"观测收敛阶（α²={alpha2:g}）", show_header=True, header_style="bold magenta")
    table.add_column("ℓ", style="cyan", justify="right")
    table.add_column("full H² 误差", justify="right")
    table.add_column("阶", justify="right", style="green")
    for i, (ell, error) in enumerate(zip(levels, errors)):
        rate = f"{observed[i - 1]:.3f}" if i > 0 else ""
        table.add_row(str(ell), _fmt(error), rate)
    console.print(table)

    frame = pd.DataFrame({"ell": levels, "h2_full": errors, "rate": [None] + observed})
    outputs = write_outputs(out, f"rates_p{p}_k{k}", frame, "", ["csv"])
    manifest = RunManifest(
        command="rates",
        params={"p": p, "k": k, "ells": levels, "alpha2": alpha2, "tol": tol,
                "from_csv": str(from_csv) if from_csv is not None else None},
        outputs=outputs,
    )
    write_manifest(out, manifest)


if __name__ == "__main__":
    main()
