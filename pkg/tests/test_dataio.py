import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from momentgen.dataio import (
    Dataset,
    NormStats,
    OracleSpec,
    apply_norm,
    encode_context,
    fit_norm_stats,
    import_csv,
    invert_norm,
    oracle_conditional_moments,
    oracle_preset,
    oracle_sample,
    read_dataset,
    synth_oracle_dataset,
    write_dataset,
)
from momentgen.errors import EmptyDataset, FormatError, InvalidSpec, LengthMismatch, ParseError
from momentgen.numerics import rng_new

f32 = st.floats(-1e6, 1e6, allow_nan=False, width=32)


@st.composite
def datasets(draw):
    dx, dy = draw(st.integers(1, 3)), draw(st.integers(1, 3))
    lengths = draw(st.lists(st.integers(1, 6), max_size=4))
    seqs = [(draw(arrays(np.float32, (T, dx), elements=f32)), draw(arrays(np.float32, (T, dy), elements=f32)))
            for T in lengths]
    names = draw(st.lists(st.text(min_size=0, max_size=5), min_size=dx + dy, max_size=dx + dy))
    return Dataset(seqs, names[:dx], names[dx:], draw(st.floats(1e-4, 0.1)))


def same(a: Dataset, b: Dataset):
    assert a.context_names == b.context_names and a.target_names == b.target_names
    assert a.frame_shift_s == b.frame_shift_s and len(a.sequences) == len(b.sequences)
    for (x, y), (u, v) in zip(a.sequences, b.sequences):
        assert np.array_equal(x, u) and np.array_equal(y, v)


class TestDataset:
    def test_pairing(self):
        with pytest.raises(LengthMismatch):
            Dataset([(np.zeros((3, 1)), np.zeros((2, 1)))], ["x"], ["y"])
        with pytest.raises(LengthMismatch):
            Dataset([(np.zeros((3, 2)), np.zeros((3, 1)))], ["x"], ["y"])

    def test_non_finite(self):
        with pytest.raises(FormatError):
            Dataset([(np.full((1, 1), np.nan), np.zeros((1, 1)))], ["x"], ["y"])

    def test_filter_frames(self):
        ds = Dataset([(np.arange(4.0)[:, None], np.arange(4.0)[:, None])], ["x"], ["y"])
        kept = ds.filter_frames(lambda x, y: x[:, 0] > 1.5)
        assert kept.n_frames == 2 and np.array_equal(kept.sequences[0][1][:, 0], [2.0, 3.0])


class TestBinary:
    @given(datasets())
    def test_round_trip(self, tmp_path_factory, ds):
        path = tmp_path_factory.mktemp("rt") / "d.mmd"
        write_dataset(ds, path)
        back = read_dataset(path)
        same(ds, back)
        write_dataset(back, path.with_suffix(".b"))
        assert path.read_bytes() == path.with_suffix(".b").read_bytes()

    def test_empty(self, tmp_path):
        ds = Dataset([], ["x"], ["y0", "y1"])
        write_dataset(ds, tmp_path / "e.mmd")
        back = read_dataset(tmp_path / "e.mmd")
        assert back.sequences == [] and back.target_names == ["y0", "y1"]

    def test_truncation_names_section(self, tmp_path):
        ds = Dataset([(np.ones((3, 1), np.float32), np.ones((3, 2), np.float32))], ["x"], ["a", "b"])
        write_dataset(ds, tmp_path / "d.mmd")
        raw = (tmp_path / "d.mmd").read_bytes()
        cases = {10: "header", 34: "name", len(raw) - 4: "sequence 0 target", len(raw) - 26: "sequence 0 context"}
        for cut, section in cases.items():
            (tmp_path / "t.mmd").write_bytes(raw[:cut])
            with pytest.raises(FormatError, match=section):
                read_dataset(tmp_path / "t.mmd")

    def test_bad_magic_version_trailing(self, tmp_path):
        ds = Dataset([(np.ones((2, 1), np.float32), np.ones((2, 1), np.float32))], ["x"], ["y"])
        write_dataset(ds, tmp_path / "d.mmd")
        raw = bytearray((tmp_path / "d.mmd").read_bytes())
        for mutated, msg in [(b"NOPE" + raw[4:], "magic"), (raw[:4] + b"\x07\0\0\0" + raw[8:], "version"),
                             (raw + b"\0", "trailing")]:
            (tmp_path / "m.mmd").write_bytes(bytes(mutated))
            with pytest.raises(FormatError, match=msg):
                read_dataset(tmp_path / "m.mmd")


class TestCsv:
    def test_one_sequence(self, tmp_path):
        (tmp_path / "x.csv").write_text("0.5,1\n1.5,2\n")
        (tmp_path / "y.csv").write_text("3\n4\n")
        ds = import_csv(tmp_path / "x.csv", tmp_path / "y.csv", [2])
        assert len(ds.sequences) == 1 and ds.sequences[0][0].shape == (2, 2)
        assert np.array_equal(ds.sequences[0][1][:, 0], [3.0, 4.0])

    def test_header_names_and_split(self, tmp_path):
        (tmp_path / "x.csv").write_text("a\n1\n2\n3\n")
        (tmp_path / "y.csv").write_text("b\n4\n5\n6\n")
        ds = import_csv(tmp_path / "x.csv", tmp_path / "y.csv", [1, 2], header=True)
        assert ds.context_names == ["a"] and ds.target_names == ["b"]
        assert [len(x) for x, _ in ds.sequences] == [1, 2]

    def test_parse_error_location(self, tmp_path):
        (tmp_path / "x.csv").write_text("1,2\n3,oops\n")
        (tmp_path / "y.csv").write_text("1\n2\n")
        with pytest.raises(ParseError) as info:
            import_csv(tmp_path / "x.csv", tmp_path / "y.csv", [2])
        assert (info.value.row, info.value.column) == (2, 2)
        assert "row 2, column 2" in str(info.value)

    def test_boundaries_mismatch(self, tmp_path):
        (tmp_path / "x.csv").write_text("1\n2\n3\n")
        (tmp_path / "y.csv").write_text("1\n2\n3\n")
        with pytest.raises(LengthMismatch):
            import_csv(tmp_path / "x.csv", tmp_path / "y.csv", [2, 2])
        (tmp_path / "y.csv").write_text("1\n2\n")
        with pytest.raises(LengthMismatch):
            import_csv(tmp_path / "x.csv", tmp_path / "y.csv", [3])


class TestNorm:
    def test_constant_dimension(self):
        x = np.column_stack([np.arange(5.0), np.full(5, 2.0)])
        ds = Dataset([(x, np.arange(5.0)[:, None])], ["a", "b"], ["y"])
        with pytest.warns(RuntimeWarning):
            st_ = fit_norm_stats(ds)
        assert st_.context_std[1] == 1.0 and st_.degenerate == ["b"]

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            fit_norm_stats(Dataset([], ["x"], ["y"]))

    @given(st.integers(0, 2**31), st.lists(st.integers(2, 30), min_size=1, max_size=4))
    def test_standardizes_and_inverts(self, seed, lengths):
        rng = np.random.default_rng(seed)
        seqs = [(rng.normal(3, 5, (T, 2)).astype(np.float32), rng.normal(-1, 0.1, (T, 3)).astype(np.float32))
                for T in lengths]
        ds = Dataset(seqs, ["a", "b"], ["p", "q", "r"])
        stats = fit_norm_stats(ds)
        norm = apply_norm(ds, stats)
        for frames in (norm.contexts(), norm.targets()):
            assert np.all(np.abs(frames.mean(axis=0)) <= 1e-10)
            assert np.all(np.abs(frames.var(axis=0) - 1) <= 1e-10)
        assert np.max(np.abs(invert_norm(norm.targets(), stats) - ds.targets())) <= 1e-10 * 10
        assert np.max(np.abs(invert_norm(norm.contexts(), stats, "context") - ds.contexts())) <= 1e-10 * 100

    def test_stats_json_round_trip(self, tmp_path, nrng):
        ds = Dataset([(nrng.normal(size=(5, 1)), nrng.normal(size=(5, 2)))], ["x"], ["a", "b"])
        s = fit_norm_stats(ds)
        s.save(tmp_path / "n.json")
        t = NormStats.load(tmp_path / "n.json")
        assert np.array_equal(s.target_std, t.target_std) and np.array_equal(s.context_mean, t.context_mean)


class TestOracle:
    def test_gaussian_closed_form(self):
        spec = OracleSpec("conditional-gaussian", target_dim=1, slope=(2.0,), offset=(0.0,), sin_amp=(0.0,),
                          std_base=(1.0,), std_slope=(0.0,), mode_sep=(0.0,))
        m = oracle_conditional_moments(spec, 3.0)
        assert np.array_equal(m.mean, [6.0]) and np.array_equal(m.var, [1.0])

    def test_bimodal_mixture_identity(self):
        spec = OracleSpec("conditional-bimodal", target_dim=1, slope=(0.0,), offset=(0.7,), sin_amp=(0.0,),
                          std_base=(0.3,), std_slope=(0.0,), mode_sep=(1.2,))
        m = oracle_conditional_moments(spec, 0.4)
        assert m.mean[0] == pytest.approx(0.7, abs=1e-15)
        assert m.var[0] == pytest.approx(0.3**2 + 1.2**2, rel=1e-14)
        assert [c[0] for c in m.components] == [0.5, 0.5]

    def test_heteroscedastic_zero_at_origin(self):
        spec = OracleSpec("heteroscedastic", std_base=(0.0, 0.0), std_slope=(1.0, 1.0))
        assert np.array_equal(oracle_conditional_moments(spec, 0.0).var, [0.0, 0.0])

    def test_preset_range(self):
        spec = oracle_preset("heteroscedastic")
        s = [np.sqrt(oracle_conditional_moments(spec, x).var) for x in (-1.0, 0.0, 1.0)]
        assert np.allclose(s[1], 0.2) and np.allclose(s[0], 1.0) and np.allclose(s[2], 1.0)

    def test_zero_spread_targets_exact(self):
        spec = OracleSpec("heteroscedastic", std_base=(0.0, 0.0), std_slope=(0.0, 0.0))
        x = np.linspace(-1, 1, 41)
        y = oracle_sample(spec, x, np.zeros(41, int), rng_new(1))
        assert np.array_equal(y, np.stack([oracle_conditional_moments(spec, v).mean for v in x]))
        # stored contexts are f32-rounded, so the file matches mu to f32 precision
        ds = synth_oracle_dataset(spec, 3, 50, rng_new(1))
        for xs, ys in ds.sequences:
            mu = np.stack([oracle_conditional_moments(spec, v).mean for v in xs[:, 0].astype(np.float64)])
            assert np.max(np.abs(ys - mu)) <= 1e-6

    def test_binned_means(self):
        spec = oracle_preset("conditional-gaussian")
        ds = synth_oracle_dataset(spec, 50, 2000, rng_new(2))
        x = ds.contexts()[:, 0].astype(np.float64)
        y = ds.targets().astype(np.float64)
        edges = np.linspace(-1, 1, 6)
        for lo, hi in zip(edges[:-1], edges[1:]):
            sel = (x >= lo) & (x < hi)
            n = sel.sum()
            assert n >= 10**4
            # bin mean of mu(x) over the frames actually in the bin
            mu = np.mean([oracle_conditional_moments(spec, v).mean for v in x[sel][::50]], axis=0)
            assert np.all(np.abs(y[sel].mean(axis=0) - mu) <= 3 * 0.5 / np.sqrt(n) + 0.01)

    def test_sample_moments_at_fixed_context(self):
        for family in ("heteroscedastic", "conditional-bimodal"):
            spec = oracle_preset(family)
            m = oracle_conditional_moments(spec, 0.6)
            y = oracle_sample(spec, np.full(40000, 0.6), np.zeros(40000, int), rng_new(3))
            sd = np.sqrt(m.var)
            assert np.all(np.abs(y.mean(axis=0) - m.mean) <= 3 * sd / 200)
            assert np.all(np.abs(y.std(axis=0) / sd - 1) <= 0.03)

    def test_deterministic_files(self, tmp_path):
        spec = oracle_preset("conditional-bimodal", n_codes=2)
        for name in ("a", "b"):
            write_dataset(synth_oracle_dataset(spec, 4, 30, rng_new(9)), tmp_path / name)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_contexts_in_range_and_one_hot(self):
        spec = oracle_preset("heteroscedastic", n_codes=3)
        ds = synth_oracle_dataset(spec, 6, 300, rng_new(4))
        c = ds.contexts()
        assert c[:, 0].min() >= -1 and c[:, 0].max() <= 1
        assert np.array_equal(c[:, 1:].sum(axis=1), np.ones(len(c)))
        assert ds.context_names == ["x", "code0", "code1", "code2"]

    def test_encode(self):
        spec = oracle_preset("heteroscedastic", n_codes=2)
        assert np.array_equal(encode_context(spec, [0.5], 1), [[0.5, 0.0, 1.0]])

    def test_spec_validation_and_json(self, tmp_path):
        with pytest.raises(InvalidSpec):
            OracleSpec("uniform")
        with pytest.raises(InvalidSpec):
            OracleSpec(slope=(1.0,))
        with pytest.raises(InvalidSpec):
            oracle_conditional_moments(oracle_preset("heteroscedastic", 2), 0.0, code=5)
        spec = oracle_preset("conditional-bimodal", n_codes=2)
        spec.save(tmp_path / "o.json")
        assert OracleSpec.load(tmp_path / "o.json") == spec
