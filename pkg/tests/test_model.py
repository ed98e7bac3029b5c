import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pixart_desk.errors import ConfigError, ContractError, ShapeError
from pixart_desk.model import config as mc
from pixart_desk.model.config import (
    DIT_CLASS_CONDITIONAL, T2I_ADALN_PER_BLOCK, T2I_ADALN_SINGLE, VARIANTS, ModelConfig,
    desk_preset, xl_preset,
)
from pixart_desk.model.network import (
    MODULATION_ORDER, ModulationTuple, PixArtModel, TextCondition, patchify_tokens,
    pos_embed_2d, timestep_frequencies, unpatchify,
)
from pixart_desk.model.params import NAME_RE, group_of, param_count, param_shapes
from pixart_desk.tensorcore import Tensor, backward, mean, mul, no_grad, tsum
from pixart_desk.tensorcore.gradcheck import finite_difference_check

from reference import attention, closed_form_count, reference_forward


def text(rng, n=5, d=64):
    return TextCondition.from_tokens(rng.standard_normal((n, d)))


def random_model(variant=T2I_ADALN_SINGLE, seed=0, **kw):
    return PixArtModel(desk_preset(variant, **kw), seed=seed, init="random")


# -- config --------------------------------------------------------------------------

def test_config_rejects_indivisible_heads():
    with pytest.raises(ConfigError):
        ModelConfig(hidden_size=64, num_heads=5)


def test_config_rejects_unknown_variant():
    with pytest.raises(ConfigError):
        ModelConfig(variant="unet")


def test_config_round_trip():
    cfg = desk_preset(DIT_CLASS_CONDITIONAL)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"hidden": 3})


def test_presets():
    d = desk_preset()
    assert (d.hidden_size, d.depth, d.num_heads) == (64, 4, 4)
    x = xl_preset()
    assert (x.hidden_size, x.depth, x.num_heads, x.patch_size, x.max_text_tokens,
            x.time_embed_freq_dim) == (1152, 28, 16, 2, 120, 256)


# -- timestep embedding ----------------------------------------------------------------

def test_frequencies_at_zero():
    f = timestep_frequencies([0.0], 256)[0]
    assert np.all(f[:128] == 0.0) and np.all(f[128:] == 1.0)


def test_frequencies_distinct_for_all_integer_pairs():
    f = timestep_frequencies(np.arange(1000), 8)
    assert len(np.unique(f, axis=0)) == 1000


def test_odd_frequency_dim_rejected():
    with pytest.raises(ConfigError):
        timestep_frequencies([1.0], 7)


def test_time_embed_shape():
    m = random_model()
    assert m.time_embed(np.array([3.0, 500.0])).shape == (2, 64)


# -- patches ---------------------------------------------------------------------------

def test_patch_degenerate_and_count(rng):
    assert patchify_tokens(rng.standard_normal((1, 4, 2, 2)), 2).shape == (1, 1, 16)
    assert patchify_tokens(rng.standard_normal((1, 4, 8, 8)), 2).shape == (1, 16, 16)


def test_patch_order_is_row_major(rng):
    x = rng.standard_normal((1, 3, 4, 6))
    tok = patchify_tokens(x, 2).data[0]
    gw = 3
    for k in range(6):
        gi, gj = divmod(k, gw)
        patch = x[0, :, 2 * gi:2 * gi + 2, 2 * gj:2 * gj + 2]
        assert np.array_equal(tok[k], np.transpose(patch, (1, 2, 0)).reshape(-1))


@given(st.integers(0, 2**31), st.sampled_from([(2, 2, 2), (4, 8, 2), (6, 4, 2), (8, 8, 4), (3, 9, 3)]))
def test_unpatchify_inverts_patchify(seed, dims):
    H, W, p = dims
    x = np.random.default_rng(seed).standard_normal((2, 3, H, W))
    assert np.array_equal(unpatchify(patchify_tokens(x, p), p, 3, H, W).data, x)


def test_patchify_shape_error_names_dims():
    with pytest.raises(ShapeError) as exc:
        patchify_tokens(np.zeros((1, 4, 7, 8)), 2)
    msg = str(exc.value)
    assert "H=7" in msg and "W=8" in msg and "p=2" in msg


def test_pos_embed_grid_rescaling():
    base = pos_embed_2d(64, 4, 4, 4)
    tall = pos_embed_2d(64, 8, 2, 4)
    assert base.shape == (16, 64) and tall.shape == (16, 64)
    # first column of the tall grid spans the same coordinate range as the base grid
    assert np.allclose(tall[0], base[0])
    assert not np.allclose(tall, base)


# -- modulation ----------------------------------------------------------------------------

def test_modulation_pack_round_trip(rng):
    packed = Tensor(rng.standard_normal((2, 6 * 8)))
    mod = ModulationTuple.from_packed(packed)
    assert np.array_equal(mod.pack().data, packed.data)
    assert np.array_equal(mod.beta1.data, packed.data[:, :8])
    assert np.array_equal(mod.alpha2.data, packed.data[:, 40:])
    assert MODULATION_ORDER == ("beta1", "beta2", "gamma1", "gamma2", "alpha1", "alpha2")


def test_global_modulation_only_for_single_variant():
    for v in (DIT_CLASS_CONDITIONAL, T2I_ADALN_PER_BLOCK):
        m = random_model(v)
        with pytest.raises(ContractError):
            m.global_modulation(m.time_embed([1.0]))


def test_global_modulation_deterministic():
    m = random_model()
    e = m.time_embed([321.0])
    assert np.array_equal(m.global_modulation(e).pack().data, m.global_modulation(e).pack().data)


def test_block_modulation_is_sum(rng):
    m = random_model()
    s_bar = m.global_modulation(m.time_embed([10.0]))
    for i in range(4):
        m[f"blocks.{i}.mod_embed"].data[:] = 0.0
    assert all(np.array_equal(m.block_modulation(s_bar, i).pack().data, s_bar.pack().data)
               for i in range(4))
    m["blocks.1.mod_embed"].data[:] = rng.standard_normal(384)
    s1 = m.block_modulation(s_bar, 1).pack().data
    assert np.array_equal(s1, s_bar.pack().data + m["blocks.1.mod_embed"].data)
    assert not np.array_equal(s1, m.block_modulation(s_bar, 2).pack().data)
    with pytest.raises(IndexError):
        m.block_modulation(s_bar, 4)


def test_shared_tuple_gradient_accumulates_over_blocks(rng):
    m = random_model()
    w = Tensor(rng.standard_normal((1, 384)))
    e = m.time_embed([77.0])
    s_bar = m.global_modulation(e)
    backward(tsum(mul(s_bar.pack(), w)))
    single = m["t_block.0.weight"].grad.copy()
    m.zero_grad()
    s_bar = m.global_modulation(m.time_embed([77.0]))
    backward(sum((tsum(mul(m.block_modulation(s_bar, i).pack(), w)) for i in range(1, 4)),
                 tsum(mul(m.block_modulation(s_bar, 0).pack(), w))))
    assert np.allclose(m["t_block.0.weight"].grad, 4 * single, rtol=1e-12, atol=1e-14)


def test_mutating_one_embedding_changes_only_its_tuple(rng):
    m = random_model()
    before = [m.block_modulation(m.global_modulation(m.time_embed([5.0])), i).pack().data for i in range(4)]
    m["blocks.2.mod_embed"].data += 1.0
    after = [m.block_modulation(m.global_modulation(m.time_embed([5.0])), i).pack().data for i in range(4)]
    assert [np.array_equal(a, b) for a, b in zip(before, after)] == [True, True, False, True]
    m["t_block.0.bias"].data += 1.0
    again = [m.block_modulation(m.global_modulation(m.time_embed([5.0])), i).pack().data for i in range(4)]
    assert not any(np.array_equal(a, b) for a, b in zip(after, again))


# -- attention ---------------------------------------------------------------------------------

def _mod(rng, h, zero_gates=False):
    v = rng.standard_normal((1, 6 * h)) * 0.5
    if zero_gates:
        v[:, 4 * h:] = 0.0
    return ModulationTuple.from_packed(Tensor(v))


def test_self_attention_matches_per_head_reference(rng):
    m = random_model()
    x = rng.standard_normal((1, 6, 64))
    mod = _mod(rng, 64)
    out = m.self_attention(Tensor(x), mod, 1).data[0]
    W = m.state_dict()
    b1, g1, a1 = mod.beta1.data[0], mod.gamma1.data[0], mod.alpha1.data[0]
    from reference import lin, ln
    hh = ln(x[0]) * (1 + g1) + b1
    qkv = lin(W, "blocks.1.attn.qkv", hh)
    ref = x[0] + a1 * lin(W, "blocks.1.attn.proj", attention(qkv[:, :64], qkv[:, 64:128], qkv[:, 128:], 4))
    assert np.max(np.abs(out - ref)) < 1e-12


def test_single_head_single_token_attention_weight_is_one(rng):
    m = PixArtModel(desk_preset(num_heads=1), seed=1, init="random")
    x = rng.standard_normal((1, 1, 64))
    mod = _mod(rng, 64)
    W = m.state_dict()
    from reference import lin, ln
    hh = ln(x[0]) * (1 + mod.gamma1.data[0]) + mod.beta1.data[0]
    v = lin(W, "blocks.0.attn.qkv", hh)[:, 128:]
    ref = x[0] + mod.alpha1.data[0] * lin(W, "blocks.0.attn.proj", v)
    assert np.max(np.abs(m.self_attention(Tensor(x), mod, 0).data[0] - ref)) < 1e-12


def test_closed_gate_self_attention_is_identity(rng):
    m = random_model()
    x = rng.standard_normal((2, 5, 64))
    assert np.array_equal(m.self_attention(Tensor(x), _mod(rng, 64, True), 0).data, x)


def test_fresh_cross_attention_is_exact_identity(rng):
    m = PixArtModel(desk_preset(), seed=3)
    m["blocks.0.cross_attn.q.weight"].data[:] = rng.standard_normal((64, 64))  # any q/k/v
    x = rng.standard_normal((2, 7, 64))
    y, mask = m.embed_caption(text(rng), 2)
    assert np.array_equal(m.cross_attention(Tensor(x), y, mask, 0).data, x)


def test_cross_attention_masking_equals_single_token(rng):
    m = random_model()
    x = Tensor(rng.standard_normal((1, 4, 64)))
    toks = rng.standard_normal((5, 64))
    mask = np.array([False, False, True, False, False])
    y, eff = m.embed_caption(TextCondition.from_tokens(toks, mask), 1)
    masked = m.cross_attention(x, y, eff, 2).data
    y1, eff1 = m.embed_caption(TextCondition.from_tokens(toks[2:3]), 1)
    single = m.cross_attention(x, y1, eff1, 2).data
    assert np.max(np.abs(masked - single)) < 1e-12


@given(st.integers(0, 2**31))
def test_cross_attention_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    m = random_model(seed=seed % 5)
    x = Tensor(r.standard_normal((1, 4, 64)))
    toks = r.standard_normal((6, 64))
    mask = r.random(6) < 0.7
    mask[0] = True
    perm = r.permutation(6)
    a = m.cross_attention(x, *m.embed_caption(TextCondition.from_tokens(toks, mask), 1), 0).data
    b = m.cross_attention(x, *m.embed_caption(TextCondition.from_tokens(toks[perm], mask[perm]), 1), 0).data
    assert np.max(np.abs(a - b)) < 1e-12


def test_zero_out_projection_receives_gradient(rng):
    m = PixArtModel(desk_preset(), seed=4)
    x = Tensor(rng.standard_normal((1, 4, 64)))
    y, mask = m.embed_caption(text(rng), 1)
    w = Tensor(rng.standard_normal((1, 4, 64)))
    proj = m["blocks.0.cross_attn.proj.weight"]

    def f(p):
        m.params["blocks.0.cross_attn.proj.weight"] = p
        return tsum(mul(m.cross_attention(x, y, mask, 0), w))

    assert np.all(proj.data == 0)
    assert finite_difference_check(f, proj, indices=list(range(0, 4096, 97))) < 1e-4
    m.params["blocks.0.cross_attn.proj.weight"] = proj
    backward(f(proj))
    assert np.abs(proj.grad).max() > 0


def test_empty_condition_rejected(rng):
    m = random_model()
    with pytest.raises(ContractError):
        m.embed_caption(TextCondition.from_tokens(np.zeros((1, 0, 64))), 1)
    with pytest.raises(ContractError):
        m.embed_caption(TextCondition.from_tokens(np.zeros((121, 64))), 1)


# -- blocks and forward --------------------------------------------------------------------

def test_closed_block_is_identity(rng):
    m = PixArtModel(desk_preset(), seed=0)
    m["blocks.1.attn.qkv.weight"].data[:] = rng.standard_normal((64, 192))
    x = rng.standard_normal((1, 9, 64))
    y, mask = m.embed_caption(text(rng), 1)
    out = m.block(Tensor(x), _mod(rng, 64, zero_gates=True), 1, y, mask).data
    assert np.array_equal(out, x)


@pytest.mark.parametrize("T", [1, 4, 64])
def test_block_shape(T, rng):
    m = random_model()
    y, mask = m.embed_caption(text(rng), 1)
    assert m.block(Tensor(rng.standard_normal((1, T, 64))), _mod(rng, 64), 0, y, mask).shape == (1, T, 64)


@pytest.mark.parametrize("variant", VARIANTS)
def test_forward_matches_numpy_reference(variant, rng):
    m = random_model(variant, seed=11)
    W = m.state_dict()
    x = rng.standard_normal((4, 8, 8))
    kw, ref_kw = {}, {}
    if variant == DIT_CLASS_CONDITIONAL:
        kw = ref_kw = {"class_label": 3}
        out = m(x, 250.0, class_labels=3).data
    else:
        toks = rng.standard_normal((7, 64))
        mask = np.array([True] * 5 + [False] * 2)
        out = m(x, 250.0, cond=TextCondition.from_tokens(toks, mask)).data
        ref_kw = {"text": toks[mask]}
    ref = reference_forward(m.config, W, x, 250.0, **ref_kw)
    assert np.max(np.abs(out - ref)) < 1e-10


def test_forward_reference_non_square_and_null_text(rng):
    m = random_model(seed=12)
    x = rng.standard_normal((4, 4, 12))
    out = m(x, 999.0).data
    assert np.max(np.abs(out - reference_forward(m.config, m.state_dict(), x, 999.0))) < 1e-10


def test_forward_shape_and_determinism(rng):
    m = random_model()
    x = rng.standard_normal((2, 4, 8, 8))
    cond = TextCondition.stack([text(rng), text(rng, 3)])
    a, b = m(x, [10.0, 20.0], cond).data, m(x, [10.0, 20.0], cond).data
    assert a.shape == x.shape and np.array_equal(a, b)


def test_forward_rejects_bad_latent():
    m = random_model()
    with pytest.raises(ShapeError):
        m(np.zeros((4, 7, 8)), 1.0)
    with pytest.raises(ShapeError):
        m(np.zeros((3, 8, 8)), 1.0)


def test_fresh_model_predicts_zero(rng):
    for v in VARIANTS:
        m = PixArtModel(desk_preset(v), seed=0)
        assert np.array_equal(m(rng.standard_normal((4, 8, 8)), 5.0).data, np.zeros((4, 8, 8)))


def test_forward_gradient_matches_finite_differences(rng):
    m = random_model(seed=5)
    x = rng.standard_normal((4, 8, 8))
    cond = text(rng)
    names = ["t_block.0.weight", "blocks.1.mod_embed", "blocks.2.cross_attn.kv.weight",
             "caption_embedder.0.fc1.weight", "final_layer.0.linear.weight", "patch_embed.0.proj.bias"]
    for name in names:
        p = m[name]
        idx = list(np.random.default_rng(len(name)).choice(p.size, 5, replace=False))

        def f(v, name=name):
            m.params[name] = v
            out = m(x, 300.0, cond)
            return mean(mul(out, out))

        assert finite_difference_check(f, p, indices=idx) < 1e-4
        m.params[name] = p


def test_dit_class_handling(rng):
    m = random_model(DIT_CLASS_CONDITIONAL)
    x = rng.standard_normal((4, 8, 8))
    none, null, three = m(x, 5.0).data, m(x, 5.0, class_labels=10).data, m(x, 5.0, class_labels=3).data
    assert not np.array_equal(none, null) and not np.array_equal(null, three)
    with pytest.raises(ContractError):
        m(x, 5.0, class_labels=11)


def test_text_condition_stack_pads_and_null(rng):
    c = TextCondition.stack([text(rng, 2), TextCondition.null_condition(1, 64), text(rng, 4)])
    assert c.tokens.shape == (3, 4, 64)
    assert c.mask.sum(axis=1).tolist() == [2, 1, 4]
    assert c.null.tolist() == [False, True, False]
    with pytest.raises(ShapeError):
        TextCondition(np.zeros((1, 3, 4)), np.ones((1, 2), dtype=bool), False)


def test_null_text_equals_no_condition(rng):
    m = random_model()
    x = rng.standard_normal((4, 8, 8))
    assert np.array_equal(m(x, 5.0).data, m(x, 5.0, TextCondition.null_condition(1, 64)).data)


# -- parameter counting ---------------------------------------------------------------------

@pytest.mark.parametrize("variant", VARIANTS)
def test_desk_count_matches_closed_form_and_allocation(variant):
    cfg = desk_preset(variant)
    counts = param_count(cfg)
    assert counts["total"] == closed_form_count(cfg)
    assert counts["total"] == PixArtModel(cfg).num_parameters()
    assert sum(v for k, v in counts.items() if k != "total") == counts["total"]


@pytest.mark.parametrize("variant", VARIANTS)
def test_xl_count_matches_closed_form(variant):
    assert param_count(xl_preset(variant))["total"] == closed_form_count(xl_preset(variant))


def test_xl_totals_frozen():
    assert param_count(xl_preset(DIT_CLASS_CONDITIONAL))["total"] == 674_816_272
    assert param_count(xl_preset(T2I_ADALN_PER_BLOCK))["total"] == 828_479_888
    assert param_count(xl_preset(T2I_ADALN_SINGLE))["total"] == 610_841_744


@given(st.sampled_from([(32, 2, 4), (48, 3, 3), (64, 5, 8), (96, 1, 6)]), st.integers(1, 5),
       st.integers(8, 40))
def test_adaln_group_structure(hdh, depth, text_dim):
    h, _, heads = hdh
    single = desk_preset(T2I_ADALN_SINGLE, hidden_size=h, depth=depth, num_heads=heads, text_dim=text_dim)
    per = single.with_variant(T2I_ADALN_PER_BLOCK)
    mlp = (h + 1) * 6 * h
    assert param_count(single)["adaln"] == depth * 6 * h + mlp
    assert param_count(per)["adaln"] == depth * mlp


def test_weight_names_follow_grammar():
    for v in VARIANTS:
        for name in param_shapes(xl_preset(v)):
            assert NAME_RE.match(name), name
            group_of(name)
