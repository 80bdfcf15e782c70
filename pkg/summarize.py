import argparse
import sys

from tool.process_results import summarize, check_aggregates, load_results_csv
from utils.common_utils import format_sig


def print_summary(path):
    metadata, summary = summarize(path)
    variable = summary['variable']

    print(f"Results: {path}")
    for key in ('version', 'base_seed', 'replications'):
        if key in metadata:
            print(f"{key}: {metadata[key]}")
    print()
    print(summary['aggregates'].to_string(index=False,
                                          float_format=format_sig))
    print()
    for metric, (value, mean) in summary['optimum'].items():
        print(f"{metric} is smallest at {variable} = {value:g} ({format_sig(mean)})")
    print(f"Failed merges: {summary['failures']}")

    _, table = load_results_csv(path)
    mismatched = check_aggregates(table, variable)
    if mismatched:
        print("Mean rows that disagree with their runs: " + ", ".join(mismatched))
        return 1
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Summarize a sweep results file")
    parser.add_argument('--csv', type=str, required=True, help='results CSV written by simulate.py sweep')
    args = parser.parse_args()
    sys.exit(print_summary(args.csv))
