import pytest
from hypothesis import given, strategies as st

from chainkit import vm
from chainkit.hashing import HashAlg, digest
from chainkit.encoding import encode_int
from chainkit.model import AspectDef, RootDef


def run(text, budget=100, **kw):
    return vm.run(vm.assemble(text, kw.get("opcode_table")), budget=budget, **kw)


def test_arithmetic_and_log():
    r = run("PUSH 6 PUSH 7 MUL DUP LOG PUSH 2 SUB")
    assert r.logs == [42]
    assert r.stack == [40]
    assert r.steps == 7


def test_division_by_zero():
    with pytest.raises(vm.VMError):
        run("PUSH 1 PUSH 0 DIV")


def test_overflow_is_an_error():
    with pytest.raises(vm.VMError):
        run(f"PUSH {2**63 - 1} PUSH 1 ADD")


def test_budget_exhausted():
    with pytest.raises(vm.BudgetExhausted):
        run("PUSH 1 PUSH 2 PUSH 3", budget=2)


def test_skipz_skips_forward():
    skipped = vm.encode_instruction(vm.Op.PUSH, 99)
    code = vm.assemble("PUSH 0") + vm.encode_instruction(vm.Op.SKIPZ, len(skipped)) + skipped + vm.assemble("PUSH 5")
    assert vm.run(code, budget=10).stack == [5]
    code = vm.assemble("PUSH 1") + vm.encode_instruction(vm.Op.SKIPZ, len(skipped)) + skipped + vm.assemble("PUSH 5")
    assert vm.run(code, budget=10).stack == [99, 5]


def test_skip_past_end_fails_static_check():
    with pytest.raises(vm.VMError):
        vm.static_check(vm.encode_instruction(vm.Op.SKIP, 3))


def test_ret_returns_body():
    r = run("PUSH 1 RET PUSH 2 ADD")
    assert r.stack == [1]
    assert r.body == vm.assemble("PUSH 2 ADD")


def test_hash_matches_hashlib():
    r = run("PUSH 5 HASH PUSHB 0x00 HASH")
    assert r.stack == [digest(HashAlg.SHA256, encode_int(5)), digest(HashAlg.SHA256, b"\x00")]


def test_env_and_locals():
    r = vm.run(vm.assemble("LOAD x PUSH 1 ADD STORE y LOAD y"), budget=10, env={"x": 4})
    assert r.stack == [5]
    with pytest.raises(vm.VMError):
        vm.run(vm.assemble("LOAD nope"), budget=10)


def test_emit_records_effects():
    r = run("PUSHB hi EMIT Broadcast")
    assert r.effects == [("Broadcast", b"hi")]


def test_aspects():
    scope = RootDef("r", aspects=(AspectDef("n", default_value=0), AspectDef("k", mutable=False)))
    aspects = {("r", "n"): 1, ("r", "k"): 9}
    vm.run(vm.assemble("LOAD_ASPECT n PUSH 1 ADD STORE_ASPECT n"), budget=10, aspects=aspects, aspect_scope=scope)
    assert aspects[("r", "n")] == 2
    with pytest.raises(vm.VMError):
        vm.run(vm.assemble("PUSH 1 STORE_ASPECT k"), budget=10, aspects=aspects, aspect_scope=scope)
    assert vm.run(vm.assemble("LOAD_ASPECT r.k"), budget=10, aspects=aspects).stack == [9]


def test_custom_opcode_costs_its_expansion():
    table = {"INC": ("PUSH 1", "ADD")}
    r = run("PUSH 1 INC INC", opcode_table=table)
    assert r.stack == [3]
    assert r.steps == 5


def test_log_roundtrip():
    entries = [1, -7, b"", b"abc"]
    assert vm.decode_log(vm.encode_log(entries)) == entries


def test_unknown_mnemonic():
    with pytest.raises(vm.VMError):
        vm.assemble("JUMP 3")


@given(st.binary(max_size=64), st.integers(min_value=0, max_value=50))
def test_any_bytes_terminate_within_budget(code, budget):
    # arbitrary bytes either fail cleanly or finish within the budget
    try:
        r = vm.run(code, budget=budget)
    except vm.ExecutionError:
        return
    assert r.steps <= budget


@given(st.lists(st.integers(min_value=-1000, max_value=1000), min_size=1, max_size=20))
def test_steps_bounded_by_instruction_count(values):
    text = " ".join(f"PUSH {v}" for v in values) + " ADD" * (len(values) - 1)
    r = run(text, budget=1000)
    assert r.stack == [sum(values)]
    assert r.steps == 2 * len(values) - 1
