import re

import pytest
from hypothesis import given, settings, strategies as st

from envmaturity.bashfile import (SECTION_TITLES, LineOrigin, RepairKind, RepairRecord, StackProfile, apply_all,
                                  apply_repair, check_syntax, detect_profile, emit_dockerfile, new_from_template,
                                  parse, render, render_with_map, replay)
from envmaturity.errors import EmitError, PatchError

PY = StackProfile(("python",), ("requirements.txt",))
JVM = StackProfile(("java",), ("pom.xml",))


def section_blocks(text: str) -> dict[int, str]:
    parts = re.split(r"^(?=### SECTION \d+:)", text, flags=re.M)
    return {int(re.match(r"### SECTION (\d+)", p).group(1)): p for p in parts if p.startswith("### SECTION")}


def test_six_sections_in_order():
    bf = new_from_template(PY)
    assert [s.id for s in bf.sections] == [1, 2, 3, 4, 5, 6]
    assert tuple(s.title for s in bf.sections) == SECTION_TITLES
    text = render(bf)
    assert re.findall(r"^### SECTION (\d+): (.+)$", text, re.M) == [(str(i), t) for i, t in enumerate(SECTION_TITLES, 1)]


def test_strict_mode_first():
    lines = render(new_from_template()).splitlines()
    assert lines[0] == "#!/usr/bin/env bash"
    first = next(ln for ln in lines[1:] if not ln.startswith("#"))
    assert re.match(r"set -[A-Za-z]*e[A-Za-z]*\b", first)  # -e enables fail-fast


def test_python_profile_installs_venv_and_requirements():
    s4 = new_from_template(PY).section(4).texts()
    assert any("-m venv" in t for t in s4)
    assert "pip install -r requirements.txt" in s4


def test_jvm_profile_builds_with_maven():
    assert any(t.startswith("mvn ") and "install" in t for t in new_from_template(JVM).section(5).texts())


def test_empty_profile_is_comments_only_and_valid():
    bf = new_from_template(StackProfile())
    for sid in (3, 4, 5):
        assert all(t.startswith("#") for t in bf.section(sid).texts())
    assert check_syntax(render(bf)) is None


def test_section6_calls_sections_in_order():
    texts = new_from_template(PY).section(6).texts()
    calls = [t for t in texts if t.endswith("preparation") or t == "domain_specific_build"]
    assert calls == ["base_environment_preparation", "generic_environment_preparation", "domain_specific_build"]
    assert render(new_from_template(PY)).rstrip().endswith('main "$@"')


def test_detect_profile():
    p = detect_profile(["requirements.txt", "src/app.py", "docs/pom.xml"])
    assert p.languages == ("python",) and p.manifests == ("requirements.txt",)
    assert detect_profile(["main.go"], ["go"]).languages == ("go",)
    assert detect_profile([]).empty


def test_replace_keeps_line_id():
    bf = new_from_template(PY)
    line = next(ln for _, ln in bf.all_lines() if ln.text == "pip install -r requirements.txt")
    new = apply_repair(bf, RepairRecord(RepairKind.REPLACE_LINE, line.line_id,
                                        "pip install -r requirements.txt --no-cache-dir"))
    got = new.line(line.line_id)
    assert got.text.endswith("--no-cache-dir") and got.origin is LineOrigin.REPAIR
    assert new.version == bf.version + 1 and len(new.repair_history) == 1
    assert bf.line(line.line_id).text == "pip install -r requirements.txt"  # original untouched


def test_append_lands_last_in_section():
    bf = apply_repair(new_from_template(PY), RepairRecord(RepairKind.APPEND_LINE, 3, "apt_install libssl-dev"))
    assert bf.section(3).texts()[-1] == "apt_install libssl-dev"


def test_delete_unknown_id_is_patch_error():
    bf = new_from_template(PY)
    with pytest.raises(PatchError):
        apply_repair(bf, RepairRecord(RepairKind.DELETE_LINE, "L9999"))
    assert bf.version == 0


@pytest.mark.parametrize("text", ["echo 'unbalanced", "a\nb", "   ", None])
def test_malformed_text_rejected(text):
    with pytest.raises(PatchError):
        apply_repair(new_from_template(PY), RepairRecord(RepairKind.APPEND_LINE, 4, text))


def test_section1_protected_by_default():
    bf = new_from_template(PY)
    first = bf.section(1).lines[0].line_id
    with pytest.raises(PatchError):
        apply_repair(bf, RepairRecord(RepairKind.REPLACE_LINE, first, "set +e"))
    with pytest.raises(PatchError):
        apply_repair(bf, RepairRecord(RepairKind.APPEND_LINE, 1, "set +e"))
    assert apply_repair(bf, RepairRecord(RepairKind.APPEND_LINE, 1, "umask 022"), allow_context_edits=True).version == 1


def test_append_target_bounds():
    with pytest.raises(PatchError):
        apply_repair(new_from_template(), RepairRecord(RepairKind.APPEND_LINE, 7, "true"))
    with pytest.raises(PatchError):
        apply_repair(new_from_template(), RepairRecord(RepairKind.APPEND_LINE, "L3", "true"))


def test_apply_all_is_atomic():
    bf = new_from_template(PY)
    with pytest.raises(PatchError):
        apply_all(bf, [RepairRecord(RepairKind.APPEND_LINE, 4, "true"), RepairRecord(RepairKind.DELETE_LINE, "nope")])
    assert bf.version == 0 and render(bf) == render(new_from_template(PY))


def test_line_ids_never_reused():
    bf = new_from_template(PY)
    victim = bf.section(4).lines[-1].line_id
    bf = apply_repair(bf, RepairRecord(RepairKind.DELETE_LINE, victim))
    bf = apply_repair(bf, RepairRecord(RepairKind.APPEND_LINE, 4, "true"))
    assert bf.section(4).lines[-1].line_id != victim


def test_render_map_points_at_lines():
    bf = new_from_template(PY)
    text, where = render_with_map(bf)
    rendered = text.split("\n")
    for lineno, line_id in where.items():
        assert rendered[lineno - 1].strip() == bf.line(line_id).text.strip()


def test_parse_rejects_broken_structure():
    text = render(new_from_template(PY))
    with pytest.raises(ValueError):
        parse(text.replace("#!/usr/bin/env bash\n", ""))
    with pytest.raises(ValueError):
        parse(text.replace("### SECTION 4:", "### SECTION 9:"))
    with pytest.raises(ValueError):
        parse(text.replace('main "$@"\n', ""))


def test_dockerfile():
    bf = new_from_template(PY)
    d = emit_dockerfile(bf, "ubuntu:22.04")
    assert "FROM ubuntu:22.04" in d and re.search(r"^COPY setup\.sh ", d, re.M)
    assert re.search(r"^RUN .*setup\.sh", d, re.M)
    assert d == emit_dockerfile(bf, "ubuntu:22.04")


def test_dockerfile_refuses_invalid_script():
    bf = new_from_template(PY)
    target = bf.section(4).lines[0].line_id
    # bypass token validation to simulate a corrupted script
    broken = apply_repair(bf, RepairRecord(RepairKind.REPLACE_LINE, target, "if true; then"))
    with pytest.raises(EmitError):
        emit_dockerfile(broken)


# properties ----------------------------------------------------------------------

_TEXTS = st.sampled_from(["apt_install libass-dev", "npm install express", "python3 -m pip install requests",
                          "mkdir -p data", 'export X="${X:-1}"', "echo 'a; b'", "true"])
_PROFILES = st.sampled_from([StackProfile(), PY, JVM, StackProfile(("javascript",), ("package.json",)),
                             StackProfile(("c",), ("meson.build",))])


@st.composite
def edited(draw):
    bf = new_from_template(draw(_PROFILES))
    for _ in range(draw(st.integers(0, 10))):
        ids = [ln.line_id for sid, ln in bf.all_lines() if sid >= 3]
        kind = draw(st.sampled_from(list(RepairKind)))
        if kind is RepairKind.APPEND_LINE or not ids:
            bf = apply_repair(bf, RepairRecord(RepairKind.APPEND_LINE, draw(st.integers(3, 6)), draw(_TEXTS)))
        elif kind is RepairKind.REPLACE_LINE:
            bf = apply_repair(bf, RepairRecord(kind, draw(st.sampled_from(ids)), draw(_TEXTS)))
        else:
            bf = apply_repair(bf, RepairRecord(kind, draw(st.sampled_from(ids))))
    return bf


@settings(max_examples=150, deadline=None)
@given(edited())
def test_replay_reproduces_render(bf):
    assert render(replay(bf)) == render(bf)
    assert bf.version == len(bf.repair_history)


@settings(max_examples=150, deadline=None)
@given(edited())
def test_render_parse_render_fixed_point(bf):
    text = render(bf)
    assert render(parse(text)) == text


@settings(max_examples=40, deadline=None)
@given(edited())
def test_every_render_passes_syntax_check(bf):
    assert check_syntax(render(bf)) is None


@settings(max_examples=100, deadline=None)
@given(edited(), st.integers(3, 6), _TEXTS)
def test_patch_locality(bf, sid, text):
    before = section_blocks(render(bf))
    after = section_blocks(render(apply_repair(bf, RepairRecord(RepairKind.APPEND_LINE, sid, text))))
    for i in range(1, 7):
        if i != sid:
            assert before[i] == after[i]
    assert before[sid] != after[sid]
