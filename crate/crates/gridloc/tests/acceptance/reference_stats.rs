// Frozen high-precision reference values for the statistics
// acceptance checks. Inputs are reproduced by `Lcg` in the test;
// expectations were computed independently with 60-digit arithmetic.

/// (seed, expected_t, expected_p) for Welch t-test cases.
pub const TTEST_CASES: [(u64, f64, f64); 20] = [
    (1000, 5.7107551450982745, 0.00047711838660138785),
    (1001, 4.466867333427645, 0.00016120295898958917),
    (1002, 15.022405289463928, 6.013759057196069e-18),
    (1003, -1.6832492538075834, 0.12435415893129387),
    (1004, -0.5755337627831211, 0.5696067801021897),
    (1005, -0.40614613204521505, 0.6868037361424034),
    (1006, 0.21723431868916263, 0.8307879969705606),
    (1007, 1.394944945861443, 0.17269574953166986),
    (1008, 2.1087389002935337, 0.06978830002287065),
    (1009, -5.91862236478293, 6.871914327447817e-05),
    (1010, -7.754383863339581, 9.92541330055245e-10),
    (1011, -5.323205547353818, 1.6660768768314093e-05),
    (1012, -8.793348549458639, 6.1453019576683564e-09),
    (1013, -11.52977157795095, 7.721653286370531e-11),
    (1014, -6.701794846236304, 3.240402814941094e-08),
    (1015, -6.351528276602859, 3.837136227605376e-06),
    (1016, -2.170390464671375, 0.038084220360732),
    (1017, -6.443727482920088, 4.182994774776587e-08),
    (1018, -2.2366193686376543, 0.042548647422874675),
    (1019, -4.5368839053261505, 5.583082780811409e-05),
];

/// (seed, expected_slope, expected_intercept) for OLS cases.
pub const LINFIT_CASES: [(u64, f64, f64); 20] = [
    (2000, -1.6833600346312498, 0.0658487812015724),
    (2001, 1.7091945568141342, 0.40762581678540016),
    (2002, -0.6638471258240823, 0.5690949920880717),
    (2003, 1.003050467380481, 0.5279006230336778),
    (2004, -1.398882434944961, 0.6776664565569026),
    (2005, 0.23138416928716626, 0.7632395146421004),
    (2006, 1.8549371207392573, 0.8910687839696193),
    (2007, -0.5098653197208431, 0.9777394191221866),
    (2008, 1.1229799765156419, -0.9625108852351132),
    (2009, -1.2528351555721484, -0.8489788265095304),
    (2010, 0.38370616643215033, -0.7772286010251447),
    (2011, -1.9837546585485832, -0.7171376240629092),
    (2012, -0.3609229267015747, -0.5331795040967718),
    (2013, 1.2736323989711649, -0.49563401928770084),
    (2014, -1.093305979198454, -0.4213833306784863),
    (2015, 0.5361167072912076, -0.33026335829219894),
    (2016, -1.8290573120746676, -0.2823778931063346),
    (2017, -0.19917278987965042, -0.19198362392648682),
    (2018, 1.422956183809526, -0.061957133587523465),
    (2019, -0.9362193787867196, -0.015405577232649369),
];
