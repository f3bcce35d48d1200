import numpy as np
import pytest

from tickchain.chain import (
    ChainError,
    ChainSpec,
    CouplingProfile,
    ProfileKind,
    build_effective_matrix,
    build_xx_matrix,
    expand_profile,
    pst_couplings,
    quench_decouple_first,
)


def test_pst_couplings_values():
    j = pst_couplings(4, 2.0)
    assert np.allclose(j, 2.0 * np.sqrt([1 * 3, 2 * 2, 3 * 1]))


def test_pst_mirror_symmetry():
    for n in (4, 5, 10, 51):
        j = pst_couplings(n, 0.7)
        assert np.allclose(j, j[::-1], atol=0)


def test_pst_rejects_bad_input():
    with pytest.raises(ChainError):
        pst_couplings(1, 1.0)
    with pytest.raises(ChainError):
        pst_couplings(5, 0.0)


def test_spec_validation():
    with pytest.raises(ChainError):
        ChainSpec(3, np.array([1.0]))  # wrong count
    with pytest.raises(ChainError):
        ChainSpec(3, np.array([1.0, -1.0]))
    with pytest.raises(ChainError):
        ChainSpec(3, np.array([0.0, 1.0]))  # J_1 = 0 only via quench
    with pytest.raises(ChainError):
        ChainSpec(3, np.array([1.0, 1.0]), gamma=-1.0)
    spec = ChainSpec(3, np.array([1.0, 1.0]), gamma=0.0)  # closed chain allowed
    assert spec.gamma == 0.0


def test_spec_immutable():
    spec = ChainSpec(3, np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        spec.couplings[0] = 5.0
    assert spec.j_max == 2.0 and spec.j_last == 2.0


def test_expand_profile_kinds():
    uni = expand_profile(CouplingProfile(ProfileKind.UNIFORM, j0=0.5), 5)
    assert np.allclose(uni.couplings, 0.5)

    exp = expand_profile(CouplingProfile(ProfileKind.EXPLICIT, explicit=(1, 2, 3)), 4)
    assert np.allclose(exp.couplings, [1, 2, 3])
    with pytest.raises(ChainError):
        expand_profile(CouplingProfile(ProfileKind.EXPLICIT, explicit=(1, 2)), 4)

    tail = expand_profile(
        CouplingProfile(ProfileKind.PST_TAIL, j0=1.0, tail_overrides=(9.0, 8.0)), 6
    )
    assert np.allclose(tail.couplings[:3], pst_couplings(6, 1.0)[:3])
    assert np.allclose(tail.couplings[3:], [9.0, 8.0])

    with pytest.raises(ChainError):
        expand_profile(CouplingProfile(ProfileKind.PST, tail_overrides=(1.0,)), 5)
    with pytest.raises(ChainError):
        expand_profile(
            CouplingProfile(ProfileKind.PST_TAIL, tail_overrides=(1.0,) * 5), 5
        )


def test_matrices_differ_by_single_sink_entry():
    spec = expand_profile(CouplingProfile(ProfileKind.PST, j0=1.3), 6, gamma=2.0)
    xx = build_xx_matrix(spec)
    eff = build_effective_matrix(spec)
    diff = eff - xx
    nz = np.argwhere(diff != 0)
    assert nz.tolist() == [[5, 5]]
    assert diff[5, 5] == -1.0j
    assert np.allclose(xx, xx.T)


def test_effective_equals_xx_for_zero_gamma():
    spec = ChainSpec(4, np.array([1.0, 0.5, 2.0]), gamma=0.0)
    assert np.allclose(build_effective_matrix(spec), build_xx_matrix(spec))


def test_quench_decouple_first():
    spec = ChainSpec(3, np.array([1.0, 1.0]))
    quenched = quench_decouple_first(spec)
    assert np.allclose(quenched.couplings, [0.0, 1.0])
    assert quenched.n_sites == 3 and quenched.gamma == spec.gamma
    # original untouched
    assert spec.couplings[0] == 1.0
