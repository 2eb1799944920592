import pytest

from declsim.notation import (
    NotationError,
    Symbol,
    Tagged,
    dumps_document,
    dumps_value,
    parse_document,
    parse_value,
)


def test_scalars():
    assert parse_value("42") == 42
    assert parse_value("-3") == -3
    assert parse_value("1.78938e-5") == 1.78938e-5
    assert parse_value("'euler'") == "euler"
    assert parse_value('"euler"') == "euler"
    assert parse_value("None") is None
    assert parse_value("True") is True


def test_triple_quoted_string():
    assert parse_value("'''fluid model'''") == "fluid model"
    assert parse_value('"""a\nb"""') == "a\nb"


def test_sequences_are_tuples():
    assert parse_value("[1, 2, 3]") == (1, 2, 3)
    assert parse_value("['a', ['b', 'c']]") == ("a", ("b", "c"))
    assert parse_value("[]") == ()


def test_maps_preserve_order_and_allow_tuple_keys():
    value = parse_value("{'b': 1, 'a': 2, ['x', 'y']: 3}")
    assert list(value) == ["b", "a", ("x", "y")]
    assert value[("x", "y")] == 3


def test_symbols_and_tagged_values():
    assert parse_value("CNTX_DEFV") == Symbol("CNTX_DEFV")
    assert parse_value("re('^a.*')") == Tagged("re", "^a.*")
    assert parse_value("KERN_DEFV(2)") == Tagged("KERN_DEFV", 2)


def test_comments_and_document():
    doc = parse_document("""
    # static part
    a = {'k': [1, 2]}  # trailing comment
    b = 'text'
    """)
    assert doc == {"a": {"k": (1, 2)}, "b": "text"}


def test_parse_error_carries_position():
    with pytest.raises(NotationError) as err:
        parse_document("a = [1, 2\nb = 3")
    assert err.value.line >= 1


def test_duplicate_keys_rejected():
    with pytest.raises(NotationError):
        parse_value("{'a': 1, 'a': 2}")
    with pytest.raises(NotationError):
        parse_document("a = 1\na = 2")


@pytest.mark.parametrize("text", [
    "{'phymod': ['''fluid model''', ['S','I'], {'euler':0,'nslam':1,'nstur':2}, [CNTX_DEFV, None]]}",
    "[1.5, -2, 'x', None, re('a|b')]",
    "{1.78938e-05: {'mixture': ['air'], 'cfdpb.units': ['si']}}",
])
def test_round_trip(text):
    value = parse_value(text)
    assert parse_value(dumps_value(value)) == value


def test_document_round_trip():
    doc = parse_document("x = {'a': [1, 2.5, 'b'], 'c': None}\ny = [re('p.*')]\n")
    assert parse_document(dumps_document(doc)) == doc


def test_float_rendering_round_trips_exactly():
    for value in (1.78938e-5, 0.1, 1 / 3, 2.220446049250313e-16):
        assert parse_value(dumps_value(value)) == value
