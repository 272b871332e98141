import pytest

from chainkit.core import create_chain
from chainkit.encoding import canonical_encode
from chainkit.ledger import SPEC_INTS, SPEC_OUTPUTS
from chainkit.model import (
    AspectDef,
    ChainConfig,
    ChainType,
    Gender,
    InstanceType,
    MechanismRef,
    RootDef,
    RootInstance,
    UtxoOutput,
)


def utxo_config(reward=0, difficulty=1, name="T", **kw):
    roots = kw.pop("roots", (RootDef("coin", aspects=(AspectDef("count", default_value=0),)),))
    return ChainConfig(
        name,
        chain_type=ChainType.UTXO,
        consensus=MechanismRef("POW", "POW", difficulty),
        roots=roots,
        block_reward=reward,
        **kw,
    )


def account_config(reward=0, difficulty=1, name="A", **kw):
    roots = kw.pop("roots", (RootDef("app"),))
    return ChainConfig(
        name,
        chain_type=ChainType.ACCOUNT,
        consensus=MechanismRef("POW", "POW", difficulty),
        roots=roots,
        block_reward=reward,
        **kw,
    )


def female(sender="alice", value=10, root="coin", **kw):
    return RootInstance(root_name=root, gender=Gender.FEMALE, sender=sender, originator=sender, value=value, **kw)


def spend(partner, outputs, sender="alice", root="coin", **kw):
    outs = [UtxoOutput(o, a) for o, a in outputs]
    return RootInstance(
        root_name=root,
        gender=Gender.MALE,
        partner_hash=partner,
        sender=sender,
        originator=sender,
        params=canonical_encode(outs),
        return_spec=SPEC_OUTPUTS,
        **kw,
    )


def invoke(partner, args, sender="alice", root="app", **kw):
    return RootInstance(
        root_name=root,
        gender=Gender.MALE,
        partner_hash=partner,
        sender=sender,
        originator=sender,
        params=canonical_encode(list(args)),
        return_spec=SPEC_INTS,
        **kw,
    )


@pytest.fixture
def utxo_chain():
    return create_chain(utxo_config())


@pytest.fixture
def account_chain():
    return create_chain(account_config())
