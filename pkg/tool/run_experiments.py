import json
import logging
import logging.handlers
import multiprocessing
import os
import sys

import numpy as np
import pandas as pd
from func_timeout import func_timeout, FunctionTimedOut
from tqdm import tqdm

import hovmerge
from hovmerge import config
from hovmerge.config import logger, sweep_logger
from hovmerge.metrics import aggregate_runs
from hovmerge.sim_engine import run_simulation, SimulationFault
from tool.config_loader import effective_config
from utils.common_utils import is_debugging

STATUS_OK = 'ok'
STATUS_FAULT = 'fault'
STATUS_TIMEOUT = 'timeout'
STATUS_ERROR = 'error'


class SweepAborted(RuntimeError):
    """A replication failed; the sweep stops at the first failure."""

    def __init__(self, status, value, seed, message):
        super().__init__(f"sweep aborted ({status}) at value {value}, seed {seed}: {message}")
        self.status = status
        self.value = value
        self.seed = seed


def jobs_of(plan):
    """(value, seed, SimConfig) for every sweep point, in (value, seed) order."""
    jobs = []
    for value in plan.values:
        for replication in range(plan.replications):
            sim_config = plan.config_for(value, replication)
            jobs.append((value, sim_config.seed, sim_config))
    return jobs


def run_row(value, sim_config, time_limit=None):
    """Simulate one replication and return its CSV row."""
    if time_limit is None or is_debugging():
        result = run_simulation(sim_config)
    else:
        result = func_timeout(time_limit, run_simulation, args=(sim_config,))

    p = sim_config.params
    row = {'kind': 'run', 'seed': sim_config.seed, 'T_v': p.T_v, 'v_max': p.v_max,
           'L_plat': sim_config.traffic.L_plat, 'N_plat': sim_config.traffic.N_plat, 'x_g_dist': p.x_g_dist}
    for name in config.METRIC_COLUMNS:
        row[name] = result.metrics[name]
    return row


def worker(job, time_limit=None):
    """Run one job; failures come back as a status so the sweep can stop with context."""
    value, seed, sim_config = job
    try:
        row = run_row(value, sim_config, time_limit)
        sweep_logger.debug(row)
        return {'status': STATUS_OK, 'value': value, 'seed': seed, 'row': row}
    except FunctionTimedOut:
        message = f"run exceeded {time_limit} s"
        status = STATUS_TIMEOUT
    except SimulationFault as e:
        message = str(e)
        status = STATUS_FAULT
    except Exception as e:
        message = repr(e)
        status = STATUS_ERROR
    sweep_logger.error("Error occurred at sweep value %s, seed %s: %s; config: %s", value, seed, message,
                       json.dumps(sim_config.to_dict()))
    return {'status': status, 'value': value, 'seed': seed, 'message': message}


def log_listener_process(log_queue, log_file):
    """Process to listen to logging messages from the workers and write them to a file."""
    listener_logger = logging.getLogger()
    handler = logging.FileHandler(log_file)
    handler.setFormatter(logging.Formatter('%(asctime)s - %(message)s'))
    listener_logger.addHandler(handler)
    listener_logger.setLevel(logging.DEBUG)

    while True:
        try:
            record = log_queue.get()
            if record is None:
                break
            listener_logger.handle(record)
        except Exception:
            import traceback
            print('Error in log listener:', file=sys.stderr)
            traceback.print_exc(file=sys.stderr)


def _init_worker(log_queue):
    # workers hand their sweep records to the listener instead of writing the file themselves
    sweep_logger.handlers = [logging.handlers.QueueHandler(log_queue)]


def _worker_star(args):
    return worker(*args)


def _collect(outcomes, n_jobs):
    results = []
    for outcome in tqdm(outcomes, total=n_jobs, desc='Sweep', disable=n_jobs < 2):
        if outcome['status'] != STATUS_OK:
            raise SweepAborted(outcome['status'], outcome['value'], outcome['seed'], outcome['message'])
        results.append(outcome)
    return results


def run_jobs(jobs, workers=1, time_limit=None):
    """Run jobs inline (workers = 1) or on a process pool; results keep the job order."""
    if workers <= 1 or len(jobs) <= 1:
        return _collect((worker(job, time_limit) for job in jobs), len(jobs))

    log_queue = multiprocessing.Queue()
    log_listener = multiprocessing.Process(target=log_listener_process,
                                           args=(log_queue, os.path.join(config.output_dir, 'sweep.log')))
    log_listener.start()
    pool = multiprocessing.Pool(processes=workers, initializer=_init_worker, initargs=(log_queue,))
    try:
        outcomes = pool.imap(_worker_star, [(job, time_limit) for job in jobs])
        results = _collect(outcomes, len(jobs))
        pool.close()
    except BaseException:
        pool.terminate()
        raise
    finally:
        pool.join()
        log_queue.put_nowait(None)
        log_listener.join()
    return results


def sweep_table(plan, results):
    """Run rows grouped by sweep value, each group followed by its aggregate row."""
    rows = []
    by_value = {}
    for outcome in results:
        by_value.setdefault(outcome['value'], []).append(outcome['row'])

    for value in plan.values:
        runs = sorted(by_value[value], key=lambda row: row['seed'])
        rows.extend(runs)
        mean_row = {key: runs[0][key] for key in ('T_v', 'v_max', 'L_plat', 'N_plat', 'x_g_dist')}
        mean_row.update({'kind': 'mean', 'seed': plan.base_seed})
        mean_row.update(aggregate_runs(runs))
        mean_row['mean_queue_wait'] = float(np.mean([row['mean_queue_wait'] for row in runs]))
        mean_row['failures'] = int(sum(row['failures'] for row in runs))
        rows.append(mean_row)
    return pd.DataFrame(rows, columns=config.CSV_COLUMNS)


def metadata_of(plan):
    return {
        'version': hovmerge.__version__,
        'base_seed': plan.base_seed,
        'sweep_variable': plan.variable,
        'replications': plan.replications,
        'config': json.dumps(effective_config(plan), sort_keys=True),
    }


def write_results_csv(table, path, metadata):
    """'# key: value' header lines, then the table with six significant digits."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='') as f:
        for key, value in metadata.items():
            f.write(f"# {key}: {value}\n")
        table.to_csv(f, index=False, float_format=config.CSV_FLOAT_FORMAT, lineterminator='\n')


def run_sweep(plan, workers=1, time_limit=None):
    """
    Every sweep value times every replication seed. Returns the result table;
    writes it to plan.output when set.
    """
    plan.validate()
    jobs = jobs_of(plan)
    logger.info("Running %s jobs (%s values x %s replications)", len(jobs), len(plan.values), plan.replications)

    try:
        results = run_jobs(jobs, workers=workers, time_limit=time_limit)
    except SweepAborted as e:
        sweep_logger.error(str(e))
        raise

    table = sweep_table(plan, results)
    if plan.output:
        write_results_csv(table, plan.output, metadata_of(plan))
        logger.info("Results written to %s", plan.output)
    return table
