import pytest

from declsim.registry import (
    UNDEFINED,
    DefaultKind,
    RegistryError,
    Restriction,
    ValueKind,
    expand_macro,
    finalize,
    load_static_defs,
    serialize,
)

PHYMOD_ENTRY = """
static_defs = {
  'model': {
    'phymod': [\"\"\"fluid model\"\"\", ['S','I'], {'euler':0,'nslam':1,'nstur':2}, [CNTX_DEFV, None]],
  },
}
"""


def test_phymod_entry_parses_per_the_grammar():
    registry = load_static_defs(PHYMOD_ENTRY)
    adef = registry.classes["model"].attributes["phymod"]
    assert adef.doc == "fluid model"
    assert adef.iface_kind is ValueKind.STR
    assert adef.kernel_kind is ValueKind.INT
    assert adef.domain.values == ("euler", "nslam", "nstur")
    assert adef.domain.conversion == {"euler": 0, "nslam": 1, "nstur": 2}
    assert [s.kind for s in adef.defaults] == [DefaultKind.CONTEXTUAL, DefaultKind.NONE]
    assert adef.restriction is Restriction.USER_SETTABLE


def test_empty_registry_finalizes_trivially():
    registry = finalize(load_static_defs("static_defs = {}"))
    assert registry.finalized
    assert registry.classes == {}


def test_strictly_positive_checker_domain():
    registry = load_static_defs("""
    static_defs = {'c': {'a': ['positive value', 'F', strictly_positive, [None]]}}
    """)
    domain = registry.classes["c"].attributes["a"].domain
    assert domain.checker == "strictly_positive"
    assert domain.admits(1.0, registry.checkers)
    assert not domain.admits(0.0, registry.checkers)
    assert not domain.admits(-1.0, registry.checkers)


def test_unknown_checker_rejected():
    with pytest.raises(RegistryError, match="unknown checker"):
        load_static_defs("static_defs = {'c': {'a': ['d', 'F', no_such_checker, [None]]}}")


def test_macro_member_must_be_declared():
    with pytest.raises(RegistryError, match="not declared"):
        finalize(load_static_defs("""
        static_defs = {'c': {
            'a': ['d', 'F', unrestricted, [None]],
            'm*02': ['a', 'missing'],
        }}
        """))


def test_macro_arity_suffix_must_match_member_count():
    with pytest.raises(RegistryError, match="arity 3"):
        load_static_defs("""
        static_defs = {'c': {
            'a': ['d', 'F', unrestricted, [None]],
            'b': ['d', 'F', unrestricted, [None]],
            'm*03': ['a', 'b'],
        }}
        """)


def test_trailing_none_only_at_end():
    with pytest.raises(RegistryError, match="terminates"):
        load_static_defs("""
        static_defs = {'c': {'a': ['d', 'S', unrestricted, [None, 'x']]}}
        """)


INHERIT_BASE = """
static_defs = {
  'parent': {
    'p1': ['first parent attribute', 'F', strictly_positive, [1.0]],
    'p2': ['second parent attribute', 'S', ['a', 'b'], ['a']],
  },
  'child': {%s},
}
inherits = {'child': %s}
"""


def test_empty_overlay_copies_parent():
    registry = finalize(load_static_defs(INHERIT_BASE % ("", "'parent'")))
    assert registry.classes["child"].attributes == registry.classes["parent"].attributes


def test_overlay_redefines_one_doc_only():
    overlay = "['parent', {'p1': ['renamed doc', 'F', strictly_positive, [1.0]]}]"
    registry = finalize(load_static_defs(INHERIT_BASE % ("", overlay)))
    child, parent = registry.classes["child"], registry.classes["parent"]
    # field-by-field: only the doc of p1 differs
    assert child.attributes["p1"].doc == "renamed doc"
    assert child.attributes["p1"].domain == parent.attributes["p1"].domain
    assert child.attributes["p1"].defaults == parent.attributes["p1"].defaults
    assert child.attributes["p2"] == parent.attributes["p2"]


def test_overlay_on_unknown_parent_attribute_rejected():
    overlay = "['parent', {'nope': ['x', 'F', unrestricted, [None]]}]"
    with pytest.raises(RegistryError, match="overlay names 'nope'"):
        finalize(load_static_defs(INHERIT_BASE % ("", overlay)))


def test_inheritance_cycle_rejected():
    text = """
    static_defs = {'a': {}, 'b': {}}
    inherits = {'a': 'b', 'b': 'a'}
    """
    with pytest.raises(RegistryError, match="inheritance cycle"):
        finalize(load_static_defs(text))


def test_finalize_idempotent_and_registry_immutable_semantics():
    registry = finalize(load_static_defs(PHYMOD_ENTRY))
    assert finalize(registry) is registry


MACRO_TEXT = """
static_defs = {'model': {
  'ro':  ['density', 'F', unrestricted, [None]],
  'rou': ['x momentum', 'F', unrestricted, [None]],
  'rov': ['y momentum', 'F', unrestricted, [None]],
  'row': ['z momentum', 'F', unrestricted, [None]],
  'roe': ['energy', 'F', unrestricted, [None]],
  'rok': ['tke', 'F', unrestricted, [None]],
  'conservative*05': ['ro', 'rou', 'rov', 'row', 'roe'],
  'conservative*06': ['ro', 'rou', 'rov', 'row', 'roe', 'rok'],
  'single*02': ['ro', 'roe'],
}}
"""


def test_expand_macro_selects_version_by_arity():
    registry = finalize(load_static_defs(MACRO_TEXT))
    assert expand_macro(registry, "model", "conservative", 5) == (
        "ro", "rou", "rov", "row", "roe")
    # user-facing name never carries the suffix
    assert "conservative" in registry.classes["model"].macros
    assert registry.classes["model"].macros["conservative"].version_name(5) == "conservative*05"


def test_expand_macro_single_version_needs_no_arity():
    registry = finalize(load_static_defs(MACRO_TEXT))
    assert expand_macro(registry, "model", "single") == ("ro", "roe")


def test_expand_macro_absent_arity_lists_available():
    registry = finalize(load_static_defs(MACRO_TEXT))
    with pytest.raises(RegistryError, match=r"available: \[5, 6\]"):
        expand_macro(registry, "model", "conservative", 7)
    with pytest.raises(RegistryError, match="no macro"):
        expand_macro(registry, "model", "nope")


def test_serialize_round_trip_structural_equality():
    import declsim
    registry = finalize(load_static_defs(declsim.resource_text("static_defs.res")))
    text = serialize(registry)
    reloaded = finalize(load_static_defs(text))
    assert sorted(reloaded.classes) == sorted(registry.classes)
    for name, cdef in registry.classes.items():
        other = reloaded.classes[name]
        assert other.attributes == cdef.attributes, name
        assert other.macros == cdef.macros
        assert other.required == cdef.required
        assert other.obsolete == cdef.obsolete
        assert other.bootable == cdef.bootable


def test_conversion_totality():
    registry = finalize(load_static_defs(PHYMOD_ENTRY))
    adef = registry.classes["model"].attributes["phymod"]
    codes = [adef.to_kernel(v) for v in adef.domain.values]
    assert len(codes) == len(set(codes)) == len(adef.domain.values)
    for value in adef.domain.values:
        assert adef.from_kernel(adef.to_kernel(value)) == value


def test_kernel_default_converts_back():
    registry = finalize(load_static_defs("""
    static_defs = {'c': {
      'a': ['coded value', ['S','I'], {'lo': 0, 'hi': 1}, [KERN_DEFV(1)]],
    }}
    """))
    assert registry.classes["c"].attributes["a"].static_default() == "hi"


def test_interface_only_slot():
    registry = load_static_defs("""
    static_defs = {'c': {'a': ['internal', 'I', non_negative, [KERN_DEFV(0)], INTF_ONLY]}}
    """)
    assert registry.classes["c"].attributes["a"].restriction is Restriction.INTERFACE_ONLY
