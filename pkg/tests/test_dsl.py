from collections import Counter
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from chainkit import ledger, vm
from chainkit.core import create_chain, run_hook
from chainkit.dsl import (
    COMPILATION_SETS,
    KEYWORDS,
    LISTINGS,
    LexError,
    LoweringError,
    ParseError,
    TokenKind,
    compilation_set,
    compile_sources,
    dump,
    eval_interaction,
    parse_source,
    read_source,
    tokenize,
    untokenize,
    validate_program,
)
from chainkit.dsl.corpus import SUPPORT
from chainkit.dsl.interact import MalformedInstanceLiteral, UnknownMethod
from chainkit.dsl.parser import parse_expression
from chainkit.model import ChainType, InstanceType
from chainkit.hashing import HashAlg

GOLDEN = Path(__file__).parent / "golden"
ALL_SOURCES = list(LISTINGS) + list(SUPPORT)


def programs(*texts):
    return [parse_source(t, f"s{i}.kl") for i, t in enumerate(texts)]


def messages(*texts):
    return validate_program(programs(*texts)).messages()


# -- lexer -------------------------------------------------------------------------


def test_keyword_set():
    assert len(KEYWORDS) == 15
    assert {"Blockchain", "Root", "Aspect", "Mechanism", "func", "import", "this", "log", "return"} <= KEYWORDS


@pytest.mark.parametrize("name", ALL_SOURCES)
def test_lexer_roundtrip_on_corpus(name):
    text = read_source(name)
    assert untokenize(tokenize(text)) == text


def test_simple_chain_keyword_counts():
    toks = tokenize(read_source("simple_chain"))
    counts = Counter(t.text for t in toks if t.kind == TokenKind.KEYWORD)
    assert counts == {"log": 5, "func": 3, "Consensus": 2, "Blockchain": 1, "this": 1, "return": 1}


def test_comments_are_trivia():
    toks = tokenize("a /* x */ b // tail\n")
    assert [t.text for t in toks] == ["a", "b"]
    assert "/* x */" in toks[1].trivia
    assert toks.tail == " // tail\n"


def test_literal_values():
    toks = tokenize('0x00ff 12 "hi"')
    assert [t.value for t in toks] == [b"\x00\xff", 12, "hi"]


@pytest.mark.parametrize("text, line, col", [("a\n  #", 2, 3), ('x = "open', 1, 5), ("/* never closed", 1, 1)])
def test_lex_errors_have_positions(text, line, col):
    with pytest.raises(LexError) as info:
        tokenize(text)
    assert (info.value.line, info.value.column) == (line, col)


@given(st.text(alphabet="ab1 (){};.=+\n/*\"", max_size=40))
def test_lexer_roundtrip_or_error(text):
    try:
        toks = tokenize(text)
    except LexError:
        return
    assert untokenize(toks) == text


# -- parser -------------------------------------------------------------------------


@pytest.mark.parametrize("name", ALL_SOURCES)
def test_golden_ast(name):
    got = dump(parse_source(read_source(name), name + ".kl")) + "\n"
    assert got == (GOLDEN / f"{name}.ast").read_text()


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        parse_source("Blockchain B(Consensus) {\n  this.consensus = ;\n}")
    assert (info.value.line, info.value.column) == (2, 20)
    assert "expected" in str(info.value)


def test_loop_bounds_must_be_literal():
    with pytest.raises(ParseError):
        parse_source("func OnNewBlock(Block b){ for i in 0..b.id { log(i) } }")


def test_expression_precedence():
    e = parse_expression("1 + 2 * 3 == 7 && !0")
    assert dump(e).splitlines()[0] == "Binary(op='&&')"


# -- validation ----------------------------------------------------------------------


def test_unresolved_imports():
    assert messages(read_source("election_chain")) == ["unresolved import 'ballot'", "unresolved import 'verdict'"]


def test_clean_sets_validate():
    for name in COMPILATION_SETS:
        report = validate_program([parse_source(t, f) for f, t in compilation_set(name)])
        assert report.ok, report.messages()


def test_non_returning_helper_is_a_warning():
    report = validate_program(programs(read_source("simple_chain")))
    assert report.ok
    assert [w.message for w in report.warnings] == ["function 'testFunc' returns no value; its result is 0"]


def test_recursion_rejected():
    src = "Blockchain C(Consensus){ this.consensus = Consensus.POW; func a(){ return b(); } func b(){ return a(); } }"
    assert messages(src) == ["recursion forbidden: a -> b -> a"]


@pytest.mark.parametrize(
    "src, message",
    [
        ("Blockchain C(Consensus){ }", "chain 'C' needs exactly one consensus assignment, found 0"),
        ("Aspect a { description = \"x\" }", "aspect 'a' has no default_value"),
        ("Mechanism m { Bogus(){ } }", "unknown hook 'Bogus' in mechanism 'm'"),
        ("Mechanism m { }", "mechanism 'm' declares no hooks"),
        ("func OnNewBlock(Widget w){ }", "unknown type 'Widget'"),
        ("func Create(){ } func OnCreate(){ }", "duplicate function 'OnCreate'"),
        ("Root r(){ AddAspect(missing) }", "unresolved import 'missing'"),
    ],
)
def test_violations(src, message):
    assert message in messages(src)


def test_two_chains_rejected():
    a = "Blockchain A(Consensus){ this.consensus = Consensus.POW; }"
    b = "Blockchain B(Consensus){ this.consensus = Consensus.POW; }"
    assert "compilation set declares more than one Blockchain" in messages(a, b)


def test_diagnostics_carry_file_and_position():
    report = validate_program(programs("\n\nimport nothing;"))
    assert str(report.violations[0]) == "s0.kl:3:1: unresolved import 'nothing'"


# -- lowering -----------------------------------------------------------------------------


def test_simple_chain_lowering():
    cfg = compile_sources(compilation_set("simple_chain"))
    assert cfg.chain_name == "B1" and cfg.consensus.kind == "POW"
    assert sorted(cfg.chain_functions) == ["OnCreate", "OnNewBlock"]
    r = run_hook(cfg, cfg.chain_functions["OnNewBlock"], {"$0": 1, "$0.id": 3, "$0.nonce": 77, "$1": b"\xab"})
    assert r.logs == [b"Block ID: 3", b"Block Hash: \xab", 77, 0]


def test_election_and_voting_sets():
    cfg = compile_sources(compilation_set("election_chain"))
    assert [r.name for r in cfg.roots] == ["ballot", "verdict"]
    assert cfg.roots[1].instance_type == InstanceType.FEMALE_ONLY
    cfg = compile_sources(compilation_set("voting_host"))
    assert [m.name for m in cfg.mechanisms] == ["proof_of_work", "say_hello", "ScalarCompare"]
    hello = cfg.mechanisms[1].hooks["Execute"]
    assert vm.run(hello, budget=50).logs == [b"hello"]


def test_scalar_compare_broadcasts_only_above_one():
    cfg = compile_sources(compilation_set("voting_host"))
    hook = cfg.mechanisms[2].hooks["OnPeerMessage"]
    assert vm.run(hook, budget=50, env={"$0": 0, "$0.message": 1}).effects == []
    assert vm.run(hook, budget=50, env={"$0": 0, "$0.message": 2}).effects == [("Broadcast", b"hello")]


CHAIN = """
Root coin(){ instance_type = BOTH; AddAspect(total) }
Aspect total { default_value = 7 }
Blockchain X(Consensus, Roots){
    this.consensus = Consensus.NOMINATION;
    this.type = ACCOUNT;
    this.hash = SHA3_256;
    this.compute_budget = 500;
    this.block_reward = 3;
    this.opcode("INC", "PUSH 1; ADD");
    Roots.add(coin);
    func square(Int x){ return x * x; }
    func OnNewBlock(Block b){
        Int acc = 0;
        for i in 1..4 { acc = acc + square(i); }
        if (acc >= 14) { log("big"); } else { log("small"); }
        log(acc);
        log(hash(b.id));
        log(get_aspect("coin.total"));
        return acc;
        log("unreachable");
    }
}
"""


def test_lowering_features():
    cfg = compile_sources([("x.kl", CHAIN)])
    assert cfg.chain_type == ChainType.ACCOUNT and cfg.hash_alg == HashAlg.SHA3_256
    assert cfg.consensus.kind == "NOMINATION" and cfg.block_reward == 3 and cfg.compute_budget == 500
    assert cfg.opcode_table == {"INC": ("PUSH 1", "ADD")}
    assert cfg.roots[0].aspects[0].default_value == 7
    chain = create_chain(cfg)
    r = vm.run(
        cfg.chain_functions["OnNewBlock"],
        budget=500,
        hash_alg=cfg.hash_alg,
        env={"$0": 0, "$0.id": 2},
        aspects=dict(chain.world.aspects),
    )
    from chainkit.hashing import digest
    from chainkit.encoding import encode_int

    assert r.logs == [b"big", 14, digest(HashAlg.SHA3_256, encode_int(2)), 7]
    assert r.stack == [14]


def test_lowering_errors():
    with pytest.raises(LoweringError, match="unresolved import"):
        compile_sources(compilation_set("election_chain")[:1])
    with pytest.raises(LoweringError, match="exactly one Blockchain"):
        compile_sources([("r.kl", "Root r(){ }")])
    with pytest.raises(LoweringError, match="unbound name"):
        compile_sources([("c.kl", "Blockchain C(Consensus){ this.consensus = Consensus.POW; func OnNewBlock(){ log(ghost); } }")])


# -- interaction -----------------------------------------------------------------------------


def test_interaction_roundtrip():
    chain = create_chain(compile_sources(compilation_set("election_chain")))
    h = eval_interaction(chain, 'election_chain.send(Female(root="verdict", sender="alice", value=3))')
    assert eval_interaction(chain, f"election_chain.RI.contains(0x{h.hex()})") is False
    ledger.mine_next_block(chain, "m", 1)
    assert eval_interaction(chain, f"election_chain.RI.contains(0x{h.hex()})") is True
    assert eval_interaction(chain, "election_chain.height()") == 1
    assert eval_interaction(chain, "election_chain.stats()").instance_count == 1
    m = eval_interaction(chain, f'election_chain.send(Male(root="ballot", partner=0x{h.hex()}, outputs="bob:1"))')
    assert chain.pending[-1].partner_hash == h and isinstance(m, bytes)


def test_interaction_errors():
    chain = create_chain(compile_sources(compilation_set("simple_chain")))
    with pytest.raises(UnknownMethod):
        eval_interaction(chain, "B1.explode()")
    with pytest.raises(UnknownMethod):
        eval_interaction(chain, "Other.height()")
    with pytest.raises(MalformedInstanceLiteral):
        eval_interaction(chain, 'B1.send(Male(root="x"))')
    with pytest.raises(MalformedInstanceLiteral):
        eval_interaction(chain, 'B1.send(Female(root="x", colour=1))')
