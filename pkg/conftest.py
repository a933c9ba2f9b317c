# Present so pytest puts the repository root on sys.path, which lets the
# test modules import their shared helpers as `tests._oracles` etc. from
# any working directory. No fixtures live here.
