"""Which sealed-bid auctions reward honesty, and how mining difficulty scales.

Run with ``python3 demos/mechanism_check.py``.
"""
from chainkit import mechanism
from chainkit.model import ChainConfig


def main() -> None:
    grid = [1, 2, 3]
    for name, build in (("second price", mechanism.vickrey_mechanism), ("first price", mechanism.first_price_mechanism)):
        mech = build(grid)
        report = mechanism.check_ic(mech)
        print(f"{name}: IC={report.is_ic} violations={len(report.violations)}")
        if report.violations:
            v = report.violations[0]
            print(f"  e.g. player {v.player} worth {grid[v.true_type]} gains by bidding {grid[v.deviation]}")

    print("vickrey on bids [7, 3, 5]: winner %d pays %d" % mechanism.run_vickrey([7, 3, 5]))

    config = ChainConfig("demo")
    header = b"demo header"
    for zeros in range(4):
        counter, nonce = mechanism.mine(config, header, zeros)
        print(f"difficulty {zeros}: first nonce at counter {counter}")


if __name__ == "__main__":
    main()
