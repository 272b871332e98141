import dataclasses

import pytest

from chainkit import ledger, vm
from chainkit.core import block_hash, create_chain, instance_hash
from chainkit.encoding import canonical_encode
from chainkit.graphstore import GraphStore, MINED, STORED_IN, Triple
from chainkit.hashing import ZERO_HASH
from chainkit.merkle import leaf_hash, tree_from_leaves
from chainkit.model import Access, AccountState, ChainType, Gender, InstanceType, MechanismRef, RootDef, RootInstance

from conftest import account_config, female, invoke, spend, utxo_config

import oracles


def mine(chain, *instances, creator="miner"):
    chain.pending.extend(instances)
    return ledger.mine_next_block(chain, creator, chain.head.timestamp + 1)


# -- template guard ------------------------------------------------------------


def test_guard_accepts_plain_female():
    assert ledger.template_check(utxo_config(), female())


@pytest.mark.parametrize(
    "g",
    [
        female(root="nope"),
        female(value=-1),
        female(partner_hash=b"\x01" * 32),
        RootInstance("coin", Gender.MALE),
        female(aspect_writes={"missing": 1}),
        female(signature=b""),
        female(return_spec=b"outputs", params=b"junk"),
        female(return_spec=b"weird"),
    ],
)
def test_guard_rejects(g):
    assert not ledger.template_check(utxo_config(), g)


def test_guard_gender_and_access():
    cfg = utxo_config(
        roots=(
            RootDef("f", instance_type=InstanceType.FEMALE_ONLY),
            RootDef("m", instance_type=InstanceType.MALE_ONLY),
            RootDef("p", access=Access.PRIVATE, controller="boss"),
        )
    )
    assert ledger.template_check(cfg, female(root="f"))
    assert not ledger.template_check(cfg, female(root="m"))
    assert not ledger.template_check(cfg, female(root="p", sender="alice"))
    assert ledger.template_check(cfg, female(root="p", sender="boss"))
    assert not ledger.template_check(cfg, female(access=Access.PRIVATE, root="f"))


def test_guard_code_template():
    cfg = utxo_config(roots=(RootDef("coin", code_template="ops=PUSH,LOG;max=2"),))
    assert ledger.template_check(cfg, female(code=vm.assemble("PUSH 1 LOG")))
    assert not ledger.template_check(cfg, female(code=vm.assemble("PUSH 1 PUSH 2 ADD")))
    assert not ledger.template_check(cfg, female(code=vm.assemble("PUSH 1 HASH")))
    assert not ledger.template_check(cfg, female(code=b"\x7f"))


# -- single instances ------------------------------------------------------------


def test_utxo_spend_and_fee(utxo_chain):
    f = female(value=10)
    mine(utxo_chain, f)
    hf = instance_hash(utxo_chain.config, f)
    assert hf in utxo_chain.world.utxo_set
    m = spend(hf, [("bob", 6), ("carol", 3)])
    mine(utxo_chain, m)
    world = utxo_chain.world
    assert hf not in world.utxo_set
    assert sorted((g.sender, g.value) for g in world.utxo_set.values()) == [("bob", 6), ("carol", 3)]
    assert world.paired[hf] == instance_hash(utxo_chain.config, m)


def test_conservation_violation(utxo_chain):
    f = female(value=10)
    mine(utxo_chain, f)
    out = ledger.process_root_instance(
        utxo_chain.config, utxo_chain.world, utxo_chain.graph, spend(instance_hash(utxo_chain.config, f), [("bob", 11)])
    )
    assert out.error == ledger.CONSERVATION_VIOLATION and out.new_state is utxo_chain.world


def test_empty_outputs_invalid(utxo_chain):
    f = female()
    mine(utxo_chain, f)
    out = ledger.process_root_instance(
        utxo_chain.config, utxo_chain.world, utxo_chain.graph, spend(instance_hash(utxo_chain.config, f), [])
    )
    assert out.error == ledger.INVALID_PARAMS


def test_partner_not_found_and_already_paired(utxo_chain):
    cfg = utxo_chain.config
    out = ledger.process_root_instance(cfg, utxo_chain.world, utxo_chain.graph, spend(b"\xee" * 32, [("bob", 1)]))
    assert out.error == ledger.PARTNER_NOT_FOUND
    f = female()
    mine(utxo_chain, f)
    mine(utxo_chain, spend(instance_hash(cfg, f), [("bob", 1)]))
    out = ledger.process_root_instance(cfg, utxo_chain.world, utxo_chain.graph, spend(instance_hash(cfg, f), [("eve", 1)]))
    assert out.error == ledger.ALREADY_PAIRED


def test_male_code_failure_rolls_back(utxo_chain):
    f = female()
    mine(utxo_chain, f)
    bad = spend(instance_hash(utxo_chain.config, f), [("bob", 1)], code=vm.assemble("PUSH 1 PUSH 0 DIV"))
    out = ledger.process_root_instance(utxo_chain.config, utxo_chain.world, utxo_chain.graph, bad)
    assert out.error == ledger.VM_ERROR and not out.ok


def test_budget_exhaustion_reported():
    chain = create_chain(utxo_config(compute_budget=3))
    out = ledger.execute_female(chain.config, chain.world, female(code=vm.assemble("PUSH 1 PUSH 1 PUSH 1 PUSH 1")))
    assert out.error == ledger.BUDGET_EXHAUSTED


def test_aspect_writes_applied(utxo_chain):
    mine(utxo_chain, female(aspect_writes={"count": 5}))
    assert utxo_chain.world.aspects[("coin", "count")] == 5


def test_account_contract_invocation():
    cfg = account_config(reward=100)
    chain = create_chain(cfg)
    mine(chain, creator="alice")
    assert chain.world.accounts["alice"].balance == 100
    f = female(root="app", value=30, code=vm.assemble("RET PUSH 1 ADD"))
    mine(chain, f, creator="x")
    hf = instance_hash(cfg, f)
    cid = ledger.contract_id(cfg, f)
    assert chain.world.accounts["alice"].balance == 70
    assert chain.world.accounts[cid] == AccountState(30, vm.assemble("PUSH 1 ADD"), oracles.sha256(canonical_encode(vm.assemble("PUSH 1 ADD"))))
    m = invoke(hf, [41], value=5)
    mine(chain, m, creator="x")
    assert vm.decode_log(chain.world.receipts[instance_hash(cfg, m)]) == [42]
    assert chain.world.accounts[cid].balance == 35
    # a second call on the same contract is refused unless the root allows it
    out = ledger.process_root_instance(cfg, chain.world, chain.graph, invoke(hf, [1]))
    assert out.error == ledger.ALREADY_PAIRED


def test_account_multi_invoke():
    cfg = account_config(reward=0, roots=(RootDef("app", multi_invoke=True),))
    chain = create_chain(cfg)
    f = female(root="app", value=0, code=vm.assemble("RET LOAD $0 PUSH 2 MUL"))
    mine(chain, f)
    hf = instance_hash(cfg, f)
    for arg in (1, 2):
        m = invoke(hf, [arg])
        mine(chain, m)
        assert vm.decode_log(chain.world.receipts[instance_hash(cfg, m)])[-1] == 2 * arg


def test_insufficient_funds():
    chain = create_chain(account_config())
    out = ledger.execute_female(chain.config, chain.world, female(root="app", value=1))
    assert out.error == ledger.INSUFFICIENT_FUNDS


def test_account_commitment():
    cfg = account_config()
    state = create_chain(cfg).world
    assert ledger.account_commitment(cfg, state) == ZERO_HASH
    state.accounts = {"b": AccountState(2), "a": AccountState(1)}
    keyed = sorted((oracles.sha256(k.encode()), v) for k, v in state.accounts.items())
    expected = oracles.merkle_root([k + canonical_encode(v) for k, v in keyed])
    assert ledger.account_commitment(cfg, state) == expected
    with pytest.raises(ledger.WrongChainType):
        ledger.account_commitment(cfg, create_chain(utxo_config()).world)


# -- blocks ------------------------------------------------------------------------


def test_reward_modes():
    chain = create_chain(utxo_config(reward=50))
    mine(chain, creator="m1")
    coins = [g for g in chain.world.utxo_set.values() if g.signature == b"coinbase"]
    assert [(g.sender, g.value) for g in coins] == [("m1", 50)]
    chain = create_chain(utxo_config(reward=0))
    mine(chain, creator="m1")
    mine(chain, creator="m1")
    assert chain.world.privileges == {"m1": 2}


def test_graph_records_block(utxo_chain):
    f = female()
    mine(utxo_chain, f)
    h = instance_hash(utxo_chain.config, f)
    assert utxo_chain.graph.query(s=h, p=STORED_IN) == [Triple(h, STORED_IN, b"1")]
    assert utxo_chain.graph.query(p=MINED) == [Triple(b"miner", MINED, b"1")]


def test_failed_block_leaves_state_and_graph_alone(utxo_chain):
    f = female()
    mine(utxo_chain, f)
    hf = instance_hash(utxo_chain.config, f)
    block = ledger.build_block(utxo_chain, [female(sender="zed"), spend(hf, [("x", 99)])], "m", 5)
    block = ledger.seal_block(utxo_chain.config, block)
    before_world = canonical_encode(utxo_chain.world.utxo_set)
    before_graph = utxo_chain.graph.to_bytes()
    with pytest.raises(ledger.InstanceFailed) as info:
        ledger.append_block(utxo_chain, block)
    assert info.value.index == 1
    assert canonical_encode(utxo_chain.world.utxo_set) == before_world
    assert utxo_chain.graph.to_bytes() == before_graph


def test_block_checks(utxo_chain):
    cfg = utxo_chain.config
    good = ledger.seal_block(cfg, ledger.build_block(utxo_chain, [female()], "m", 1))
    with pytest.raises(ledger.BadPredecessor):
        ledger.apply_block(cfg, utxo_chain.world, utxo_chain.graph, dataclasses.replace(good, height=5), utxo_chain.head)
    with pytest.raises(ledger.RootSetMismatch):
        ledger.apply_block(cfg, utxo_chain.world, utxo_chain.graph, dataclasses.replace(good, root_set=()), utxo_chain.head)
    unsealed = ledger.build_block(utxo_chain, [female()], "m", 1)
    bad = next(
        dataclasses.replace(unsealed, nonce=canonical_encode(c))
        for c in range(100)
        if not oracles.sha256(ledger.seal_binder(unsealed) + canonical_encode(c)).hex().startswith("0")
    )
    with pytest.raises(ledger.InvalidConsensusProof):
        ledger.apply_block(cfg, utxo_chain.world, utxo_chain.graph, bad, utxo_chain.head)


def test_mining_drops_invalid_pending(utxo_chain):
    block = mine(utxo_chain, female(), spend(b"\x00" * 32, [("x", 1)]), female(root="ghost"))
    assert len(block.all_instances()) == 1
    assert utxo_chain.pending == []


def test_same_block_female_then_male(utxo_chain):
    f = female(value=4)
    block = mine(utxo_chain, spend(instance_hash(utxo_chain.config, f), [("bob", 4)]), f)
    assert len(block.all_instances()) == 2


def test_replay_and_block_file(tmp_path, utxo_chain):
    f = female()
    mine(utxo_chain, f)
    mine(utxo_chain, spend(instance_hash(utxo_chain.config, f), [("bob", 10)]))
    path = ledger.write_blocks(tmp_path / "c.blocks", utxo_chain.blocks)
    again = ledger.replay(ledger.read_blocks(path))
    assert again.hashes() == utxo_chain.hashes()
    assert again.world == utxo_chain.world
    assert again.graph.triples() == utxo_chain.graph.triples()
    path.write_bytes(path.read_bytes() + b"\x00\x01")
    with pytest.raises(ledger.CorruptBlockFile):
        ledger.read_blocks(path)


def test_append_block_file(tmp_path, utxo_chain):
    path = tmp_path / "c.blocks"
    ledger.write_blocks(path, utxo_chain.blocks)
    block = mine(utxo_chain, female())
    ledger.append_block_file(path, block)
    assert ledger.read_blocks(path) == utxo_chain.blocks


def test_replay_rejects_forged_genesis(utxo_chain):
    forged = dataclasses.replace(utxo_chain.blocks[0], timestamp=9)
    with pytest.raises(ledger.CorruptBlockFile):
        ledger.replay([forged])


def test_nomination_needs_creator():
    cfg = utxo_config()
    cfg = dataclasses.replace(cfg, consensus=MechanismRef("NOM", "NOMINATION"))
    chain = create_chain(cfg)
    block = ledger.build_block(chain, [], "", 1)
    with pytest.raises(ledger.InvalidConsensusProof):
        ledger.append_block(chain, block)
    ledger.append_block(chain, ledger.build_block(chain, [], "n1", 1))
    assert chain.height == 1


def test_identical_female_is_a_duplicate(utxo_chain):
    f = female(value=7)
    mine(utxo_chain, f)
    before = dict(utxo_chain.world.utxo_set)
    out = ledger.process_root_instance(utxo_chain.config, utxo_chain.world, utxo_chain.graph, female(value=7))
    assert out.error == ledger.DUPLICATE_INSTANCE
    block = mine(utxo_chain, female(value=7))
    assert block.all_instances() == [] and utxo_chain.world.utxo_set == before


def test_duplicate_within_one_batch_is_dropped(utxo_chain):
    block = mine(utxo_chain, female(value=3), female(value=3))
    assert len(block.all_instances()) == 1


@pytest.mark.parametrize("marker", [b"coinbase", b"output"])
def test_reserved_signatures_rejected(marker):
    assert not ledger.template_check(utxo_config(), female(signature=marker))


def test_forged_coinbase_cannot_preempt_reward():
    chain = create_chain(utxo_config(reward=5))
    future = ledger.reward_instance(chain.config, dataclasses.replace(chain.head, height=1, creator="miner"))
    block = mine(chain, future)
    assert block.all_instances() == []
    assert sum(g.value for g in chain.world.utxo_set.values()) == 5
