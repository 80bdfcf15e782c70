import pandas as pd

from hovmerge import config
from hovmerge.metrics import aggregate_runs, AGGREGATED


def read_metadata(path):
    metadata = {}
    with open(path, 'r') as f:
        for line in f:
            if not line.startswith('#'):
                break
            key, _, value = line[1:].strip().partition(': ')
            metadata[key] = value
    return metadata


def load_results_csv(path):
    """Returns (metadata, table) of a results file written by the sweep."""
    metadata = read_metadata(path)
    table = pd.read_csv(path, comment='#')
    return metadata, table


def recompute_aggregates(table, variable):
    """Mean and standard error per sweep value, recomputed from the run rows."""
    runs = table[table['kind'] == 'run']
    rows = []
    for value, group in runs.groupby(variable, sort=True):
        row = {variable: value, 'replications': len(group)}
        row.update(aggregate_runs(group.to_dict('records')))
        rows.append(row)
    return pd.DataFrame(rows)


def find_optimum(table, variable, metric):
    """Sweep value with the smallest mean of `metric`, and that mean."""
    means = table[table['kind'] == 'mean']
    best = means.loc[means[metric].idxmin()]
    return float(best[variable]), float(best[metric])


def summarize(path):
    metadata, table = load_results_csv(path)
    variable = metadata.get('sweep_variable', 'T_v')
    summary = {
        'variable': variable,
        'aggregates': recompute_aggregates(table, variable),
        'optimum': {metric: find_optimum(table, variable, metric) for metric in AGGREGATED},
        'failures': int(table.loc[table['kind'] == 'run', 'failures'].sum()),
    }
    return metadata, summary


def check_aggregates(table, variable, rel=1e-5):
    """Names of the mean-row fields that do not match recomputation from the run rows."""
    recomputed = recompute_aggregates(table, variable).set_index(variable)
    means = table[table['kind'] == 'mean'].set_index(variable)
    mismatched = []
    for value, row in means.iterrows():
        for column in recomputed.columns:
            if column not in config.CSV_COLUMNS or column not in means.columns:
                continue
            expected = recomputed.loc[value, column]
            if abs(row[column] - expected) > rel * max(1.0, abs(expected)):
                mismatched.append(f"{variable}={value}: {column}")
    return mismatched
