"""Independent evaluation of the closed-form GN quantities used to freeze
expected values in the C++ tests. Uses mpmath at 50 digits."""
import mpmath as mp

mp.mp.dps = 50
H = mp.mpf("6.62607015e-34")


def alpha_per_km(atten_db_per_km):
    return mp.mpf(atten_db_per_km) * mp.log(10) / 10


def l_eff(atten, length):
    a = alpha_per_km(atten)
    return (1 - mp.e ** (-a * length)) / a, 1 / a


def ase(nf_db, gain_db, nu, bref):
    return H * nu * 10 ** (mp.mpf(nf_db) / 10) * (10 ** (mp.mpf(gain_db) / 10) - 1) * bref


def nli(gamma, atten, length, beta2_ps2, p, bch, bwdm):
    le, lea = l_eff(atten, length)
    b2 = abs(mp.mpf(beta2_ps2)) * mp.mpf("1e-24")
    return (mp.mpf(8) / 27 * gamma ** 2 * le ** 2 * (p / bch) ** 3 * bch
            * mp.asinh(mp.pi ** 2 / 2 * b2 * lea * bwdm ** 2) / (mp.pi * b2 * lea))


if __name__ == "__main__":
    le, lea = l_eff(0.2, 80)
    print("L_eff", mp.nstr(le, 17), "L_eff_a", mp.nstr(lea, 17))
    a20 = ase(5, 20, mp.mpf("193.4e12"), mp.mpf("12.5e9"))
    a16 = ase(5, 16, mp.mpf("193.4e12"), mp.mpf("12.5e9"))
    print("ASE G20", mp.nstr(a20, 17), "dBm", mp.nstr(10 * mp.log10(a20 * 1000), 6))
    print("ASE G16", mp.nstr(a16, 17))
    n = nli(mp.mpf("1.3"), 0.2, 80, mp.mpf("-21.27"), mp.mpf("1e-3"), mp.mpf("32e9"), mp.mpf("32e9"))
    print("NLI", mp.nstr(n, 17), "dBm", mp.nstr(10 * mp.log10(n * 1000), 6))
    print("GSNR (G20 ASE)", mp.nstr(10 * mp.log10(mp.mpf("1e-3") / (a20 + n)), 10))
    print("GSNR (G16 transparent)", mp.nstr(10 * mp.log10(mp.mpf("1e-3") / (a16 + n)), 10))
    eta = n / mp.mpf("1e-3") ** 3
    for name, a in (("G20", a20), ("G16", a16)):
        popt = (a / (2 * eta)) ** (mp.mpf(1) / 3)
        print("P_opt", name, mp.nstr(10 * mp.log10(popt * 1000), 10), "dBm")
    # two identical transparent links
    print("GSNR 2 links", mp.nstr(10 * mp.log10(mp.mpf("1e-3") / (2 * (a16 + n))), 10))
