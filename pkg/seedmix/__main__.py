"""
seedmix, seed stocking plans from field trials.  Trains a multi-task yield model (one task per seed variety) on
experiment data, projects each variety's yield over the weather history of every location in a sales region, chooses
the expected-yield maximizing mix of varieties per location under a risk cap that grows with the land's productivity
index, and aggregates the mixes into a stocking plan.

Commands: 'simulate', 'train', 'tune', 'plan', 'frontier', or 'help' to see this message.  For the options of a
command call 'seedmix <command> -h'.  Defaults come from the config file (see seedmix.cfg.default), flags win.
"""

import sys

from loguru import logger

import seedmix.cli


def main():
    """
    Call the seedmix command named by the first argument.
    """
    logger.remove()
    sys.exit(seedmix.cli.main(sys.argv[1:]))


if __name__ == '__main__':
    main()
