import argparse
import json
import sys

from hovmerge import config
from hovmerge.config import logger
from hovmerge.linear_analysis import spectrum, peak_deceleration, characteristic_polynomial, \
    exact_roots, UnderdampedSpectrumError
from hovmerge.merge_protocol import ramp_launch
from hovmerge.sim_engine import run_simulation, export_event_log, SimulationFault
from hovmerge.traffic_gen import mean_flow, max_flow
from hovmerge.vehicle_model import ParameterError
from tool.config_loader import parse_config, effective_config, ConfigParseError
from tool.run_experiments import run_sweep, SweepAborted, STATUS_TIMEOUT
from utils.common_utils import format_sig

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAULT = 3
EXIT_TIMEOUT = 4

ANALYSIS_DELTA_V = (1.0, 5.0, 10.0, 15.0)


def build_parser():
    parser = argparse.ArgumentParser(description="On-ramp merging into a dedicated automated-vehicle lane")
    subparsers = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='JSON config file')
    common.add_argument('--tv', type=float, help='velocity weight T_v in the merge scores (s)')
    common.add_argument('--vmax', type=float, help='lane speed v_max (m/s)')
    common.add_argument('--xg', type=float, help='hold point distance upstream of the merge region (m)')
    common.add_argument('--lplat', type=int, help='platoon separation parameter L_plat')
    common.add_argument('--nplat', type=int, help='platoon size parameter N_plat')
    common.add_argument('--tmax', type=float, help='measured simulation time per run (s)')
    common.add_argument('--dt', type=float, help='integration step (s)')
    common.add_argument('--seed', type=int, help='seed of the first replication')
    common.add_argument('--ramp-rate', type=float, help='Poisson ramp arrivals (vehicles/s); saturated if omitted')
    common.add_argument('--no-ramp', action='store_true', help='disable ramp demand')
    common.add_argument('--no-enhanced-braking', action='store_true', help='trailing vehicles brake at d_max only')
    common.add_argument('--literal-region-terms', action='store_true',
                        help='leave D out of the in-region approach terms')
    common.add_argument('--paper-scale', action='store_true', help='25 replications of 20000 s')
    common.add_argument('--out', type=str, help='output path')

    run = subparsers.add_parser('run', parents=[common], help='single simulation')
    run.add_argument('--event-log', type=str, help='write the event log as JSON lines')

    sweep = subparsers.add_parser('sweep', parents=[common], help='seeded replications over a parameter grid')
    sweep.add_argument('--sweep-var', choices=config.SWEEP_VARIABLES, help='parameter to sweep')
    sweep.add_argument('--values', type=float, nargs='+', help='sweep values (default grid if omitted)')
    sweep.add_argument('--reps', type=int, help='replications per sweep value')
    sweep.add_argument('--workers', type=int, default=config.max_workers, help='worker processes')
    sweep.add_argument('--time-limit', type=float, help='wall-clock limit per replication (s)')

    subparsers.add_parser('analysis', parents=[common], help='linear response of a trailing vehicle')
    subparsers.add_parser('flow', parents=[common], help='mean and maximum incoming flow')
    return parser


def overrides_from(args):
    overrides = {
        'control': {'T_v': args.tv, 'v_max': args.vmax, 'x_g_dist': args.xg},
        'traffic': {'L_plat': args.lplat, 'N_plat': args.nplat, 'seed': args.seed},
        'run': {'T_max': args.tmax, 'dt': args.dt, 'ramp_arrival_rate': args.ramp_rate},
        'sweep': {'variable': getattr(args, 'sweep_var', None), 'values': getattr(args, 'values', None),
                  'replications': getattr(args, 'reps', None), 'output': args.out},
    }
    if args.paper_scale:
        if args.tmax is None:
            overrides['run']['T_max'] = config.FULL_T_MAX
        if getattr(args, 'reps', None) is None:
            overrides['sweep']['replications'] = config.FULL_REPLICATIONS
    if args.no_ramp:
        overrides['run']['ramp_demand'] = False
    if args.no_enhanced_braking:
        overrides['run']['enhanced_braking'] = False
    if args.literal_region_terms:
        overrides['run']['literal_region_terms'] = True
    return overrides


def command_run(args, plan):
    sim_config = plan.base
    result, world = run_simulation(sim_config, return_world=True)
    report = result.to_dict()
    report['config'] = effective_config(plan)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        with open(args.out, 'w') as f:
            f.write(text + '\n')
    if args.event_log:
        export_event_log(world, args.event_log)
    return EXIT_OK


def command_sweep(args, plan):
    table = run_sweep(plan, workers=args.workers, time_limit=args.time_limit)
    means = table[table['kind'] == 'mean']
    print(means[[plan.variable, 'a_tot', 'd_tot', 't_ave', 'merge_rate', 'mean_queue_wait', 'failures']]
          .to_string(index=False, float_format=format_sig))
    return EXIT_OK


def command_analysis(args, plan):
    p = plan.base.params
    spec = spectrum(p)
    poly, _ = characteristic_polynomial(p)
    T_m, v_m0 = ramp_launch(p)
    print(f"Characteristic polynomial: {poly}")
    print(f"Exact roots: {', '.join(str(root) for root in exact_roots(p))}")
    print(f"lambda1 = {spec.lambda1:.6g} 1/s, lambda2 = {spec.lambda2:.6g} 1/s")
    print(f"Peak time theta = {spec.theta_peak:.6g} s, peak factor = {spec.peak_factor:.6g} 1/s")
    print(f"Recovery time T = {spec.T_recover:.6g} s")
    print(f"Ramp launch: T_m = {T_m:.6g} s, v_m0 = {v_m0:.6g} m/s")
    for delta_v in ANALYSIS_DELTA_V:
        decel, _ = peak_deceleration(delta_v, p)
        print(f"delta_v = {delta_v:g} m/s -> peak deceleration {decel:.6g} m/s^2")
    return EXIT_OK


def command_flow(args, plan):
    p = plan.base.params
    traffic = plan.base.traffic
    flow, mean_n_gap, mean_l_sep = mean_flow(traffic.N_plat, traffic.L_plat, p)
    print(f"Mean flow: {flow * 3600:.0f} vehicles/h")
    print(f"Maximum flow: {max_flow(p) * 3600:.0f} vehicles/h")
    print(f"Mean gaps per platoon: {mean_n_gap:.6g}, mean platoon separation: {mean_l_sep:.6g} m")
    return EXIT_OK


COMMANDS = {
    'run': command_run,
    'sweep': command_sweep,
    'analysis': command_analysis,
    'flow': command_flow,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        plan = parse_config(args.config, overrides_from(args))
        if args.command == 'sweep':
            plan.validate()
        return COMMANDS[args.command](args, plan)
    except (ConfigParseError, ParameterError, UnderdampedSpectrumError, FileNotFoundError) as e:
        logger.error("Error: %s", e)
        return EXIT_INVALID
    except SimulationFault as e:
        logger.error("Error: %s", e)
        return EXIT_FAULT
    except SweepAborted as e:
        logger.error("Error: %s", e)
        return EXIT_TIMEOUT if e.status == STATUS_TIMEOUT else EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
