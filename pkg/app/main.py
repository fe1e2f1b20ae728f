import argparse
import json
import sys
import traceback

from app.core.errors import RsbError
from app.core.solver import SolverOptions
from app.core.types import ModelKind
from app.services.sweep_service import (MODEL_PARAMETERS, SolveRequest, SweepAxis, SweepGrid, ranked, run_solve,
                                        run_sweep, write_sweep_csv)
from app.services.verification import SUITES, VerifyOptions, format_table, run_suite
from app.utils.logger import logger

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2


class _Parser(argparse.ArgumentParser):
    """参数错误时输出一行诊断并以退出码 1 结束。"""

    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: 错误: {message}\n")


def _theta_list(text):
    try:
        return tuple(float(v) for v in text.split(',') if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"θ 列表无法解析: {text!r}") from None


def _add_model_flags(parser):
    parser.add_argument('--model', required=True, choices=[m.value for m in ModelKind])
    parser.add_argument('--k', type=int, default=0)
    parser.add_argument('--beta', type=float, required=True)
    parser.add_argument('--j0', type=float)
    parser.add_argument('--j', type=float)
    parser.add_argument('--alpha', type=float)
    parser.add_argument('--theta', type=_theta_list, default=())
    parser.add_argument('--extremize-theta', action='store_true')
    parser.add_argument('--nodes', type=int)
    parser.add_argument('--damping', type=float, default=0.5)
    parser.add_argument('--tol', type=float, default=1e-10)
    parser.add_argument('--max-iter', type=int, default=20000)
    parser.add_argument('--seed', type=int, default=0)


def build_parser():
    parser = _Parser(prog='rsb-solver', description='RS / K-RSB 压强求解与有限 N 验证')
    commands = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    solve = commands.add_parser('solve', help='多起点求解自洽方程，输出 JSON 报告')
    _add_model_flags(solve)

    sweep = commands.add_parser('sweep', help='参数网格扫描，输出 CSV')
    _add_model_flags(sweep)
    sweep.add_argument('--sweep', action='append', required=True, metavar='NAME:START:STOP:STEPS')
    sweep.add_argument('--out')
    sweep.add_argument('--jobs', type=int, default=1)

    verify = commands.add_parser('verify', help='运行验收套件')
    verify.add_argument('--suite', required=True, choices=SUITES)
    verify.add_argument('--n', type=int)
    verify.add_argument('--samples', type=int)
    verify.add_argument('--sweeps', type=int)
    verify.add_argument('--nodes', type=int)
    verify.add_argument('--inner-samples', type=int, default=64)
    verify.add_argument('--seed', type=int, default=0)
    verify.add_argument('--histogram-out')
    return parser


def _solve_request(parser, args) -> SolveRequest:
    model = ModelKind(args.model)
    given = {'beta': args.beta, 'j0': args.j0, 'j': args.j, 'alpha': args.alpha}
    foreign = [name for name, value in given.items()
               if value is not None and name not in MODEL_PARAMETERS[model]]
    if foreign:
        parser.error(f"{model.value} 模型不接受参数 {', '.join('--' + f for f in foreign)}")
    if args.extremize_theta and args.theta:
        parser.error("--theta 与 --extremize-theta 不能同时使用")
    params = {name: given[name] for name in MODEL_PARAMETERS[model] if given[name] is not None}
    try:
        options = SolverOptions(damping=args.damping, tol=args.tol, max_iter=args.max_iter)
        request = SolveRequest(model, args.k, params, tuple(args.theta), args.nodes, args.seed, options,
                               args.extremize_theta)
        request.problem()
    except ValueError as exc:
        parser.error(str(exc))
    return request


def cmd_solve(parser, args) -> int:
    request = _solve_request(parser, args)
    reports = ranked(run_solve(request))
    for report in reports:
        print(json.dumps(report.to_json(), ensure_ascii=False))
    if not reports:
        logger.warning("没有分支收敛")
        return EXIT_FAILED
    return EXIT_OK


async def cmd_sweep(parser, args) -> int:
    request = _solve_request(parser, args)
    if len(args.sweep) > 2:
        parser.error("最多支持两个扫描轴")
    if args.jobs < 1:
        parser.error(f"--jobs 必须 ≥ 1: {args.jobs}")
    try:
        axes = [SweepAxis.parse(text) for text in args.sweep]
        for axis in axes:
            if axis.name not in MODEL_PARAMETERS[request.model]:
                parser.error(f"{request.model.value} 模型不能扫描参数 {axis.name!r}")
            request.with_params(**{axis.name: axis.start}).model_params()
    except ValueError as exc:
        parser.error(str(exc))
    grid = SweepGrid(*axes)
    rows = await run_sweep(request, grid, args.jobs)
    if args.out:
        with open(args.out, 'w', newline='') as handle:
            write_sweep_csv(handle, request, rows)
        logger.info(f"扫描结果已写入 {args.out}")
    else:
        write_sweep_csv(sys.stdout, request, rows)
    return EXIT_OK


def cmd_verify(parser, args) -> int:
    options = VerifyOptions(n=args.n, samples=args.samples, seed=args.seed, nodes=args.nodes, sweeps=args.sweeps,
                            inner_samples=args.inner_samples, histogram_out=args.histogram_out)
    try:
        results = run_suite(args.suite, options)
    except ValueError as exc:
        parser.error(str(exc))
    print(format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.warning(f"{len(failed)} 项检查未通过: {', '.join(failed)}")
        return EXIT_FAILED
    return EXIT_OK


async def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logger.info(f"rsb-solver {args.command} 已启动")
    try:
        if args.command == 'solve':
            return cmd_solve(parser, args)
        if args.command == 'sweep':
            return await cmd_sweep(parser, args)
        return cmd_verify(parser, args)
    except RsbError:
        logger.error(f"{args.command} 执行失败: {traceback.format_exc()}")
        return EXIT_FAILED
