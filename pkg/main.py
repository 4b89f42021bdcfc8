#!/usr/bin/env python3
"""
folitor 主程序

T³ 线性叶状结构上叶向复结构的谱方法单值化工具
"""
import argparse
import dataclasses
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

# 添加src目录到Python路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.config import ConfigManager, SolverConfig
from src.data_validator import DataValidator
from src.diophantine_analyzer import analyze, find_liouville_modes
from src.error_handler import EXIT_CHECK_FAILED, EXIT_SUCCESS, ErrorHandler, FieldMismatchError, ValidationError
from src.foliation_ops import FoliationParams, density_check
from src.homotopy_solver import BeltramiField, HomotopyPath, closedness_residual, integrate_homotopy
from src.leaf_chart import LeafChart, LeafPatch
from src.logger import get_logger, setup_logging
from src.metric_builder import (
    LeafForm, assemble_closed_form, build_h, counterexample_family, defect_image_identity,
    euclidean_metric, lemma3_solve_nu, linear_family, obstruction_detect,
)
from src.models import HomotopySolution, RunConfig, VerificationSummary
from src.performance_metrics import PerformanceMetrics
from src.report_generator import ReportGenerator
from src.spectral_core import TORUS2, TORUS3, FourierField, extreme_modulus
from src.verification_engine import VerificationEngine, random_beltrami


SUBCOMMANDS = ("analyze", "solve", "metric", "counterexample", "chart", "verify")
DEFAULT_DELTA_HAT = 0.3
CHART_SHIFT = (0.5, 0.25)


class FoliationToolkit:
    """流水线调度器，每次调用执行一个子命令"""

    def __init__(self, config_file: Optional[str] = None, console_level: Optional[int] = None):
        # 初始化配置
        self.config_manager = ConfigManager(config_file)
        self.config = self.config_manager.get_config()

        # 设置日志
        setup_logging(self.config.logging, console_level)
        self.logger = get_logger("foliation_toolkit")

        # 初始化组件
        self.error_handler = ErrorHandler()
        self.data_validator = DataValidator()
        self.report_generator = ReportGenerator(self.config.report)
        self.metrics = PerformanceMetrics()
        self.max_workers = self.config.performance.max_workers

        self.results: Dict[str, Any] = {}
        self.warnings: List[str] = []
        self.csv_tables: Dict[str, Tuple[List[str], List[list]]] = {}
        self.verification: Optional[VerificationSummary] = None

    def run_config_from_args(self, args: argparse.Namespace) -> RunConfig:
        """命令行参数覆盖配置文件"""
        solver = self.config.solver
        if args.cutoff is not None:
            cutoff = args.cutoff
        elif args.command == "analyze":
            cutoff = self.config.diophantine.scan_cutoff
        else:
            cutoff = self.config.spectral.cutoff
        pick = lambda value, default: default if value is None else value
        return RunConfig(
            subcommand=args.command,
            slope_a1=args.slope_a1,
            slope_a2=args.slope_a2,
            cutoff=cutoff,
            residual_tol=pick(args.residual_tol, solver.residual_tol),
            vanish_guard=pick(args.vanish_guard, solver.vanish_guard),
            resolvent_tol=pick(args.resolvent_tol, solver.resolvent_tol),
            category=pick(args.category, solver.category),
            radius=pick(args.radius, solver.analytic_radius),
            dimension=pick(args.dimension, self.config.spectral.dimension),
            seed=args.seed,
            t=pick(args.t, self.config.counterexample.t),
            modes=pick(args.modes, self.config.counterexample.modes),
            in_field=args.in_field,
            out=args.out,
            config_file=args.config,
            corrupt_u=getattr(args, 'corrupt_u', False),
        )

    # 运行入口

    def run(self, run_config: RunConfig) -> int:
        """
        执行一个子命令并写出报告

        Returns:
            退出码：0 成功，1 性质检查未通过，2 输入验证错误，3 数值失败
        """
        exit_code, error = EXIT_SUCCESS, None
        try:
            self._validate(run_config)
            handler = getattr(self, f"run_{run_config.subcommand}")
            exit_code = handler(run_config)
        except Exception as e:
            exit_code = self.error_handler.handle(e, run_config.subcommand)
            error = self.error_handler.describe(e)
        finally:
            self._write_outputs(run_config, exit_code, error)
        return exit_code

    def _validate(self, run_config: RunConfig):
        config_check = self.config_manager.validate_config()
        run_check = run_config.validate()
        for warning in config_check.warnings + run_check.warnings:
            self.logger.warning(warning)
            self.warnings.append(warning)
        errors = config_check.errors + run_check.errors
        if errors:
            raise ValidationError(errors[0], {"errors": errors})
        if run_config.subcommand in ("analyze", "metric", "counterexample", "chart") \
                and run_config.dimension != TORUS3:
            raise ValidationError(f"子命令 {run_config.subcommand} 只支持 torus3")

    def _params(self, run_config: RunConfig) -> FoliationParams:
        if run_config.dimension == TORUS2:
            return FoliationParams.torus2()
        return FoliationParams.from_strings(run_config.slope_a1, run_config.slope_a2)

    def _solver_config(self, run_config: RunConfig) -> SolverConfig:
        return dataclasses.replace(
            self.config.solver,
            residual_tol=run_config.residual_tol,
            vanish_guard=run_config.vanish_guard,
            resolvent_tol=run_config.resolvent_tol,
            category=run_config.category,
            analytic_radius=run_config.radius,
        )

    def _remember(self, messages: List[str]):
        for message in messages:
            if message not in self.warnings:
                self.warnings.append(message)

    # 子命令

    def run_analyze(self, run_config: RunConfig) -> int:
        params = self._params(run_config)
        with self.metrics.phase("density"):
            density = density_check(params, min(run_config.cutoff, self.config.spectral.cutoff))
        self.results["density"] = density
        with self.metrics.phase("diophantine_scan"):
            report = analyze(params, run_config.cutoff, self.config.diophantine, self.max_workers)
        self.results["diophantine"] = report
        self._remember(report.warnings)
        self.csv_tables["records"] = (
            ["p", "m", "k", "absN", "d"],
            [[*r.mode.components, r.abs_n, r.d] for r in report.records],
        )
        self.results["summary"] = {
            "classification": report.classification,
            "fitted_exponent": report.fitted_exponent,
            "records": len(report.records),
            "candidates_scanned": report.candidates_scanned,
        }
        return EXIT_SUCCESS

    def _beltrami(self, run_config: RunConfig, dimension: str, rng: np.random.Generator) -> BeltramiField:
        if run_config.in_field:
            mu = self.data_validator.load_field_file(run_config.in_field)
            if mu.dimension != dimension:
                raise FieldMismatchError(f"{run_config.in_field}: 场维度 {mu.dimension} 与 --dimension {dimension} 不符",
                                         {"path": run_config.in_field})
            mu = mu.with_cutoff(run_config.cutoff)
        else:
            mu = random_beltrami(rng, dimension, run_config.cutoff, DEFAULT_DELTA_HAT)
            self.logger.info(f"未指定 --in-field，使用种子 {run_config.seed} 的随机 μ (δ̂={DEFAULT_DELTA_HAT})")
        beltrami = BeltramiField.from_field(mu, self.config.spectral.oversample)
        self.results["beltrami"] = {"mu": beltrami.mu, "delta_hat": beltrami.delta_hat}
        return beltrami

    def _solve(self, run_config: RunConfig, params: FoliationParams,
               rng: np.random.Generator) -> Tuple[BeltramiField, HomotopySolution]:
        beltrami = self._beltrami(run_config, params.dimension, rng)
        solver_config = self._solver_config(run_config)
        path = HomotopyPath(beltrami.mu, solver_config.path)
        with self.metrics.phase("homotopy"):
            solution = integrate_homotopy(params, beltrami, solver_config, path, self.config.spectral.oversample)
        self._remember(solution.warnings)
        self.metrics.increment("accepted_steps", len(solution.diagnostics) - 1)
        self.metrics.increment("rejected_steps", solution.rejected_steps)
        self.metrics.increment("resolvent_iterations", sum(d.resolvent_iterations for d in solution.diagnostics))
        final = solution.diagnostics[-1]
        self.results["solution"] = {
            "final": solution.final,
            "times": solution.times,
            "diagnostics": solution.diagnostics,
            "rejected_steps": solution.rejected_steps,
            "unit_choice_exercised": solution.unit_choice_exercised,
            "path": solution.path,
            "category": solution.category,
            "closedness_residual": final.residual,
            "closedness_residual_with_spill": final.residual_with_spill,
            "min_abs_f": final.min_abs_f,
        }
        self.csv_tables["diagnostics"] = (
            ["t", "residual", "min_abs_f"],
            [[d.t, d.residual, d.min_abs_f] for d in solution.diagnostics],
        )
        return beltrami, solution

    def run_solve(self, run_config: RunConfig) -> int:
        params = self._params(run_config)
        rng = np.random.default_rng(run_config.seed)
        beltrami, solution = self._solve(run_config, params, rng)
        final = solution.diagnostics[-1]
        self.results["summary"] = {
            "delta_hat": beltrami.delta_hat,
            "accepted_steps": len(solution.times) - 1,
            "rejected_steps": solution.rejected_steps,
            "closedness_residual": final.residual,
            "min_abs_f": final.min_abs_f,
        }
        return EXIT_SUCCESS

    def run_metric(self, run_config: RunConfig) -> int:
        params = self._params(run_config)
        rng = np.random.default_rng(run_config.seed)
        beltrami, solution = self._solve(run_config, params, rng)
        leafform = LeafForm(solution.final, beltrami.mu)

        with self.metrics.phase("diophantine_scan"):
            report = analyze(params, self.config.diophantine.scan_cutoff, self.config.diophantine,
                             self.max_workers, group_search=False)
        self.results["classification"] = report.classification

        with self.metrics.phase("metric"):
            closure = build_h(params, leafform, self.config.metric, report.classification)
            form = assemble_closed_form(params, leafform, closure)
            identity = defect_image_identity(params, leafform, closure)
            metric = euclidean_metric(params, leafform, closure, self.config.metric)
        self._remember(closure.warnings)
        self.results["closure"] = closure
        self.results["closed_form"] = {
            "components": list(form.components),
            "differential_norms": form.differential_norms,
            "dform_residual": form.dform_residual,
            "defect_image_identity": identity,
        }
        self.results["metric"] = {
            "min_eigenvalue": metric.min_eigenvalue,
            "min_location": metric.min_location,
            "grid_points": metric.grid_points,
            "positive_definite": metric.positive_definite,
            "flat": metric.flat,
            "max_curvature": metric.max_curvature,
        }
        self.results["summary"] = {
            "classification": report.classification,
            "residual1": closure.residual1,
            "residual2": closure.residual2,
            "dform_residual": form.dform_residual,
            "min_eigenvalue": metric.min_eigenvalue,
            "max_curvature": metric.max_curvature,
        }
        return EXIT_SUCCESS

    def _targets(self, count: int) -> List[float]:
        targets = list(self.config.counterexample.s_targets)[:count]
        while len(targets) < count:
            targets.append(targets[-1] + 0.5 if targets else 2.0)
        return targets

    def run_counterexample(self, run_config: RunConfig) -> int:
        params = self._params(run_config)
        ce = self.config.counterexample
        with self.metrics.phase("mode_search"):
            search = find_liouville_modes(params, self._targets(run_config.modes), ce.search_bound,
                                          ce.min_mode_norm)
        self._remember(search.warnings)
        self.results["mode_search"] = search
        if not search.modes:
            raise ValidationError("没有找到满足目标指数的小分母模式", {"targets": search.targets})

        with self.metrics.phase("counterexample"):
            family = counterexample_family(params, search.modes, run_config.t, ce)
            nu = lemma3_solve_nu(params, linear_family(family.direction), run_config.t, ce.time_steps,
                                 run_config.vanish_guard)
            obstruction = obstruction_detect(params, family.field, family.modes, run_config.t)
        self._remember(family.warnings)
        (min_abs, _), _ = extreme_modulus(family.field)
        self.results["family"] = family
        self.results["nu"] = {
            "final": nu.final,
            "times": nu.times,
            "sup_nu": nu.sup_nu,
            "closedness_residual": nu.residuals,
            "min_abs_f": nu.min_abs_f,
        }
        self.results["obstruction"] = obstruction
        self.results["summary"] = {
            "modes": [m.as_list() for m in family.modes],
            "verdict": obstruction.verdict,
            "forced_magnitudes": obstruction.magnitudes,
            "sup_nu": nu.sup_nu[-1],
            "closedness_residual": nu.residuals[-1],
            "min_abs_f": min_abs,
        }
        return EXIT_SUCCESS

    def run_chart(self, run_config: RunConfig) -> int:
        params = self._params(run_config)
        rng = np.random.default_rng(run_config.seed)
        beltrami, solution = self._solve(run_config, params, rng)
        cc = self.config.chart
        patch = LeafPatch((0.0, 0.0, 0.0), cc.radius, cc.resolution)
        chart = LeafChart(params, solution.final, beltrami.mu, cc, self.max_workers)
        with self.metrics.phase("chart"):
            sample = chart.develop(patch, rng=rng)
            sample.translation_defect = chart.translation_defect(patch, CHART_SHIFT)
        self._remember(sample.warnings)
        self.results["chart"] = {
            "loop_residual": sample.loop_residual,
            "derivative_defect": sample.derivative_defect,
            "metric_defect": sample.metric_defect,
            "min_jacobian": sample.min_jacobian,
            "max_dilatation": sample.max_dilatation,
            "translation_defect": sample.translation_defect,
            "translation_shift": list(CHART_SHIFT),
            "resolution": patch.resolution,
            "radius": patch.radius,
        }
        z, psi, k = (np.ravel(a) for a in (sample.z, sample.psi, sample.dilatation))
        self.csv_tables["chart"] = (
            ["re_z", "im_z", "re_psi", "im_psi", "K"],
            [[z[i].real, z[i].imag, psi[i].real, psi[i].imag, k[i]] for i in range(z.size)],
        )
        self.results["summary"] = {key: self.results["chart"][key] for key in
                                   ("loop_residual", "min_jacobian", "max_dilatation", "translation_defect")}
        return EXIT_SUCCESS

    def run_verify(self, run_config: RunConfig) -> int:
        params = self._params(run_config)
        engine = VerificationEngine(params, self.config, run_config.cutoff, run_config.seed)
        with self.metrics.phase("verify"):
            summary = engine.run(corrupt_u=run_config.corrupt_u)
        self.verification = summary
        self.results["checks"] = summary.checks
        self.results["summary"] = {
            "passed": len(summary.checks) - len(summary.failures),
            "total": len(summary.checks),
            "failures": summary.failures,
        }
        return EXIT_SUCCESS if summary.all_passed else EXIT_CHECK_FAILED

    # 输出

    def _write_outputs(self, run_config: RunConfig, exit_code: int, error: Optional[Dict[str, Any]]):
        """报告在出错时同样写出，结果节只包含已完成的部分"""
        document = self.report_generator.build_document(
            run_config, self.results, exit_code, error, self.warnings, self.metrics.generate_report())
        check = self.data_validator.validate_report(document.to_dict())
        for message in check.errors:
            self.logger.error(f"报告不符合模式: {message}")
        self.logger.debug(self.metrics.get_summary_text())

        path = run_config.out or self.report_generator.default_path(run_config)
        try:
            self.report_generator.write_json(document, path)
            stem = os.path.splitext(path)[0]
            for name, (columns, rows) in self.csv_tables.items():
                self.report_generator.write_csv(f"{stem}_{name}.csv", columns, rows)
        except OSError as e:
            self.logger.error(f"无法写出报告 {path}: {e}")

        if self.config.report.print_summary and self.logger.logger.getEffectiveLevel() <= logging.INFO:
            print(self.report_generator.generate_summary_markdown(document, self.verification))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='T³ 线性叶状结构的叶向复结构单值化工具',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
示例:
  python main.py analyze --slope-a1 golden --slope-a2 0 --cutoff 2000
  python main.py solve --in-field mu.json --cutoff 6
  python main.py counterexample --slope-a1 "liouville(5)" --slope-a2 0 --modes 3 --t 0.1
  python main.py verify --seed 7
        """,
    )
    subparsers = parser.add_subparsers(dest='command', help='可用命令')

    helps = {
        "analyze": "小分母扫描与丢番图分类",
        "solve": "同伦ODE求解叶向全纯形式",
        "metric": "构造闭形式与欧氏度量",
        "counterexample": "Liouville 斜率上的障碍反例",
        "chart": "叶上的展开映射",
        "verify": "运行全部性质检查",
    }
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name, help=helps[name])
        sub.add_argument('--config', '-c', help='配置文件路径')
        sub.add_argument('--slope-a1', default='sqrt2', help='斜率 a1：小数、有理数或 sqrt2/sqrt3/golden/liouville(k)')
        sub.add_argument('--slope-a2', default='sqrt3', help='斜率 a2')
        sub.add_argument('--cutoff', type=int, help='截断阶数M（analyze 时为扫描上界）')
        sub.add_argument('--dimension', choices=[TORUS3, TORUS2], help='环面维度')
        sub.add_argument('--category', choices=['smooth', 'analytic'], help='函数类别')
        sub.add_argument('--radius', type=float, help='解析范数半径r')
        sub.add_argument('--residual-tol', type=float, help='闭性残差容差')
        sub.add_argument('--vanish-guard', type=float, help='min|f| 相对下限')
        sub.add_argument('--resolvent-tol', type=float, help='预解式迭代容差')
        sub.add_argument('--t', type=float, help='反例参数t')
        sub.add_argument('--modes', type=int, help='反例模式个数')
        sub.add_argument('--seed', type=int, default=7, help='随机种子（默认7）')
        sub.add_argument('--in-field', help='输入场JSON文件 (μ)')
        sub.add_argument('--out', help='报告JSON输出路径')
        log_group = sub.add_mutually_exclusive_group()
        log_group.add_argument('--verbose', action='store_true', help='详细日志')
        log_group.add_argument('--quiet', action='store_true', help='仅显示警告和错误')
        if name == "verify":
            sub.add_argument('--corrupt-u', action='store_true', help='故障注入：篡改U的符号，检查应失败')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 2

    console_level = logging.DEBUG if args.verbose else (logging.WARNING if args.quiet else None)
    try:
        toolkit = FoliationToolkit(args.config, console_level)
        run_config = toolkit.run_config_from_args(args)
        return toolkit.run(run_config)
    except KeyboardInterrupt:
        print("\n操作被用户中断", file=sys.stderr)
        return 3


if __name__ == '__main__':
    sys.exit(main())
