"""LP serialization, external MILP solver driver and the exhaustive oracle."""

from __future__ import annotations

import itertools
import logging
import os
import re
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .errors import (
    CapacityError,
    DecodeError,
    GuardError,
    ModelError,
    PlacementError,
    SolverConfigError,
)
from .milp import MilpModel, VarKind, decode_solution, verify_solution
from .params import BuildOptions, PowerParams, RadioParams
from .radio import DemandSet
from .solution import Solution, SolutionAssembler
from .topology import Topology
from .utils import fmt_number

logger = logging.getLogger("nfvpower.solver")

DEFAULT_COMMAND = [
    "{solver}", "-printingOptions", "all", "-import", "{lp}",
    "-sec", "{time_limit}", "-ratioGap", "{mip_gap}",
    "-solve", "-solu", "{sol}",
]

# LP 形式の名前に使える文字
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
MAX_NAME_LEN = 255

# 総当たりオラクルの規模上限
ORACLE_MAX_HOSTS = 6
ORACLE_MAX_RRHS = 4

Status = Literal["optimal", "feasible", "infeasible", "timeout", "error"]


class SolverSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    solver_path: Optional[str] = Field(None, description="実行ファイル。未指定は自動検出")
    command: List[str] = Field(default_factory=lambda: list(DEFAULT_COMMAND))
    output_format: Literal["cbc", "generic"] = "cbc"
    time_limit: float = Field(600.0, gt=0)
    mip_gap: float = Field(1e-6, ge=0)
    verify_tol: float = Field(1e-6, gt=0)


@dataclass
class SolverRun:
    lp_path: str
    solver_command: List[str]
    time_limit: float
    gap_tolerance: float
    status: Status = "error"
    assignment: Dict[str, float] = field(default_factory=dict)
    objective: Optional[float] = None
    returncode: Optional[int] = None
    output: str = ""
    wall_time: float = 0.0

    @property
    def has_solution(self) -> bool:
        return bool(self.assignment) and self.status in ("optimal", "feasible", "timeout")


# ----------------------------------------------------------------------
# LP 形式
# ----------------------------------------------------------------------
def _check_names(m: MilpModel) -> None:
    seen: set = set()
    for name in itertools.chain(m.variables, (c.name for c in m.constraints)):
        if len(name) > MAX_NAME_LEN or not _NAME_RE.match(name):
            raise ModelError(f"name {name!r} is not valid in LP format")
        if name in seen:
            raise ModelError(f"name collision in LP output: {name}")
        seen.add(name)
    if "obj" in seen:
        raise ModelError("name collision with the objective row: obj")


def _terms(terms: Iterable[Tuple[str, float]]) -> str:
    parts = []
    for var, coef in terms:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {fmt_number(abs(coef))} {var}")
    return " ".join(parts)


def emit_lp(m: MilpModel) -> str:
    """CPLEX LP 形式のテキスト。目的関数の定数項は出力しない。"""
    _check_names(m)
    lines = ["\\ nfvpower energy-aware placement model", "Minimize"]
    if m.objective:
        lines.append(f" obj: {_terms(m.objective.items())}")
    else:
        first = next(iter(m.variables))
        lines.append(f" obj: + 0 {first}")

    lines.append("Subject To")
    for c in m.constraints:
        lines.append(f" {c.name}: {_terms(c.terms)} {c.sense.value} {fmt_number(c.rhs)}")

    lines.append("Bounds")
    for name, var in m.variables.items():
        if var.kind == VarKind.BINARY:
            continue
        if var.upper is not None:
            lines.append(f" {fmt_number(var.lower)} <= {name} <= {fmt_number(var.upper)}")
        elif var.lower != 0:
            lines.append(f" {name} >= {fmt_number(var.lower)}")

    general = [n for n, v in m.variables.items() if v.kind == VarKind.INTEGER]
    if general:
        lines.append("General")
        lines += [f" {n}" for n in general]
    binary = [n for n, v in m.variables.items() if v.kind == VarKind.BINARY]
    if binary:
        lines.append("Binary")
        lines += [f" {n}" for n in binary]
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(m: MilpModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emit_lp(m), encoding="utf-8")
    return path


# ----------------------------------------------------------------------
# ソルバー検出と実行
# ----------------------------------------------------------------------
def resolve_solver(explicit: Optional[str] = None) -> Optional[str]:
    """環境変数 → PATH 上の cbc → pulp 同梱の CBC の順に探す"""
    for candidate in (explicit, os.getenv("NFVPOWER_SOLVER_PATH")):
        if candidate:
            if Path(candidate).is_file() or shutil.which(candidate):
                return shutil.which(candidate) or candidate
            logger.warning(f"solver path {candidate} does not exist")
    found = shutil.which("cbc")
    if found:
        return found
    try:
        import pulp

        cmd = pulp.PULP_CBC_CMD(msg=False)
        if cmd.available():
            return cmd.path
    except Exception as e:  # pulp の同梱バイナリが無い環境
        logger.debug(f"pulp CBC not usable: {e}")
    return None


def _status_from_header(header: str) -> Tuple[Status, bool]:
    """(status, 解があるか)"""
    text = header.strip().lower()
    if text.startswith("optimal"):
        return "optimal", True
    if "infeasible" in text:
        return "infeasible", False
    if text.startswith("stopped on time"):
        return "timeout", "no integer solution" not in text
    if text.startswith("stopped"):
        return "feasible", "no integer solution" not in text
    return "error", False


def parse_cbc_solution(text: str) -> Tuple[Status, Optional[float], Dict[str, float]]:
    """CBC の -solu 出力を (status, objective, assignment) にする"""
    lines = text.splitlines()
    if not lines:
        return "error", None, {}
    header = lines[0]
    status, has_values = _status_from_header(header)
    objective = None
    match = re.search(r"objective value\s+([-+0-9.eE]+)", header)
    if match:
        objective = float(match.group(1))
    assignment: Dict[str, float] = {}
    if has_values:
        for line in lines[1:]:
            tokens = line.replace("**", " ").split()
            if len(tokens) < 3 or not tokens[0].isdigit():
                continue
            try:
                assignment[tokens[1]] = float(tokens[2])
            except ValueError:
                continue
    return status, objective, assignment


def parse_generic_solution(text: str) -> Tuple[Status, Optional[float], Dict[str, float]]:
    """`name value` 行の汎用形式。`# status <word>` と `# objective <value>` を任意で読む。"""
    status: Optional[Status] = None
    objective = None
    assignment: Dict[str, float] = {}
    for line in text.splitlines():
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "#":
            if len(tokens) >= 3 and tokens[1] == "status":
                word = tokens[2].lower()
                status = word if word in ("optimal", "feasible", "infeasible", "timeout") else "error"
            elif len(tokens) >= 3 and tokens[1] == "objective":
                objective = float(tokens[2])
            continue
        if len(tokens) >= 2:
            try:
                assignment[tokens[0]] = float(tokens[1])
            except ValueError:
                continue
    if status is None:
        status = "optimal" if assignment else "error"
    return status, objective, assignment


def _render_command(settings: SolverSettings, solver: Optional[str], lp: Path, sol: Path) -> List[str]:
    needs_solver = any("{solver}" in part for part in settings.command)
    if needs_solver and not solver:
        raise SolverConfigError(
            "no MILP solver found: set NFVPOWER_SOLVER_PATH, install cbc or the pulp package"
        )
    values = {
        "solver": solver or "",
        "lp": str(lp),
        "sol": str(sol),
        "time_limit": fmt_number(settings.time_limit),
        "mip_gap": fmt_number(settings.mip_gap),
    }
    try:
        return [part.format(**values) for part in settings.command]
    except (KeyError, IndexError) as e:
        raise SolverConfigError(f"bad solver command template: {e}") from e


def run_external_solver(
    lp_path: str | Path,
    settings: Optional[SolverSettings] = None,
    var_names: Optional[Iterable[str]] = None,
    sol_path: Optional[str | Path] = None,
) -> SolverRun:
    """LP ファイルを外部ソルバーで解く。失敗は status=error として返す。"""
    settings = settings or SolverSettings()
    lp_path = Path(lp_path)
    sol_path = Path(sol_path) if sol_path else lp_path.with_suffix(".sol")
    solver = resolve_solver(settings.solver_path)
    argv = _render_command(settings, solver, lp_path, sol_path)
    run = SolverRun(
        lp_path=str(lp_path),
        solver_command=argv,
        time_limit=settings.time_limit,
        gap_tolerance=settings.mip_gap,
    )

    started = time.perf_counter()
    try:
        proc = subprocess.run(
            argv,
            capture_output=True,
            text=True,
            timeout=settings.time_limit + 60,
            cwd=str(lp_path.parent),
        )
    except FileNotFoundError as e:
        raise SolverConfigError(f"solver executable not found: {argv[0]}") from e
    except subprocess.TimeoutExpired as e:
        run.wall_time = time.perf_counter() - started
        run.status = "timeout"
        run.output = (e.stdout or "") if isinstance(e.stdout, str) else ""
        logger.warning(f"solver did not return within {settings.time_limit + 60:.0f} s")
        return run
    run.wall_time = time.perf_counter() - started
    run.returncode = proc.returncode
    run.output = (proc.stdout or "")[-4000:] + (proc.stderr or "")[-2000:]

    if not sol_path.exists():
        lowered = (proc.stdout or "").lower()
        run.status = "infeasible" if "infeasible" in lowered else "error"
        if run.status == "error":
            logger.warning(f"solver produced no solution file (exit {proc.returncode})")
        return run

    text = sol_path.read_text(encoding="utf-8", errors="replace")
    parser = parse_cbc_solution if settings.output_format == "cbc" else parse_generic_solution
    status, objective, assignment = parser(text)
    if proc.returncode != 0 and status == "error":
        logger.warning(f"solver exited with {proc.returncode}")

    # CBC は行の活動値も出力するので変数名で絞る
    if assignment and var_names is not None:
        assignment = {name: assignment.get(name, 0.0) for name in var_names}
    run.status = status
    run.objective = objective
    run.assignment = assignment if status in ("optimal", "feasible", "timeout") else {}
    return run


def solve_model(
    m: MilpModel,
    settings: Optional[SolverSettings] = None,
    workdir: Optional[str | Path] = None,
) -> Tuple[SolverRun, Optional[Solution]]:
    """emit → solve → decode → verify。目的関数に定数項を戻す。"""
    settings = settings or SolverSettings()
    with tempfile.TemporaryDirectory(prefix="nfvpower-", dir=workdir) as tmp:
        lp_path = write_lp(m, Path(tmp) / "model.lp")
        run = run_external_solver(lp_path, settings, var_names=m.variables.keys())

    if run.objective is not None:
        run.objective += m.objective_constant
    logger.info(f"solver status={run.status} objective={run.objective}")
    if not run.has_solution:
        run.assignment = {}
        return run, None

    try:
        sol = decode_solution(m, run.assignment)
    except DecodeError as e:
        logger.warning(f"solver assignment could not be decoded: {e}")
        run.status = "error"
        run.assignment = {}
        return run, None

    report = verify_solution(m, sol, settings.verify_tol)
    if not report.passed:
        logger.warning(
            f"solver solution violates {len(report.violated())} rows "
            f"(max {report.max_violation:.3g}); status downgraded"
        )
        run.status = "error"
        return run, None
    return run, sol


# ----------------------------------------------------------------------
# 総当たりオラクル
# ----------------------------------------------------------------------
def exhaustive_solve(
    t: Topology,
    d: DemandSet,
    p: PowerParams,
    r: RadioParams,
    options: Optional[BuildOptions] = None,
) -> Solution:
    """各 RRH を1つの BBUVM ホストに、各 BBUVM ホストを1つの CNVM ホストに割り当てる全組合せを試す"""
    options = options or BuildOptions()
    hosts = t.hosts
    if len(hosts) > ORACLE_MAX_HOSTS or len(t.rrhs) > ORACLE_MAX_RRHS:
        raise GuardError(
            f"instance too large for exhaustive search: {len(hosts)} hosts, {len(t.rrhs)} RRHs"
        )
    assembler = SolutionAssembler(t, d, p, r, integer_wdm=options.integer_wdm)
    active = d.active_rrhs
    if not active:
        return assembler.assemble({}, {})

    bbu_choices = []
    for rrh in active:
        cands = [h for h in hosts if assembler.path(h, rrh) is not None]
        if not cands:
            raise PlacementError(f"RRH {rrh} cannot be reached from any host", rrh=rrh)
        bbu_choices.append(cands)

    best: Optional[Solution] = None
    tried = 0
    for combo in itertools.product(*bbu_choices):
        bbu_of = dict(zip(active, combo))
        bbu_hosts = sorted(set(combo))
        cnvm_choices = [
            [q for q in hosts if q == h or assembler.path(q, h, hosts_only=True) is not None]
            for h in bbu_hosts
        ]
        for cnvm_combo in itertools.product(*cnvm_choices):
            tried += 1
            try:
                sol = assembler.assemble(bbu_of, dict(zip(bbu_hosts, cnvm_combo)))
            except (CapacityError, PlacementError):
                continue
            if best is None or sol.objective < best.objective - 1e-9:
                best = sol
    if best is None:
        raise PlacementError("no feasible placement exists")
    logger.debug(f"exhaustive search evaluated {tried} placements, best {best.objective:.3f} W")
    return best
