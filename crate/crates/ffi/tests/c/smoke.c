#include <math.h>
#include <stdio.h>
#include <string.h>
#include "salvkit.h"

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "check failed: %s (%s)\n", #cond, salv_last_error()); return 1; } } while (0)

int main(void) {
    const char *src =
        "module top(input [3:0] x, input [3:0] y, input [3:0] z, output [3:0] a, output [3:0] d);\n"
        "  wire [3:0] b;\n"
        "  assign b = x + y;\n"
        "  assign a = b & z;\n"
        "  assign d = x ^ z;\n"
        "endmodule\n";
    SalvModule *m = NULL;
    CHECK(salv_module_parse(src, "top.v", &m) == SALV_STATUS_OK);
    const char *targets[] = {"d"};
    SalvSlice *s = NULL;
    CHECK(salv_slice_extract(m, targets, 1, &s) == SALV_STATUS_OK);
    CHECK(strstr(salv_slice_text(s), "assign d = x ^ z;") != NULL);
    CHECK(strstr(salv_slice_text(s), "assign a") == NULL);
    CHECK(salv_slice_span_count(s) == 3);
    size_t st, en;
    CHECK(salv_slice_span(s, 1, &st, &en) == SALV_STATUS_OK);
    CHECK(strncmp(src + st, "assign d = x ^ z;", en - st) == 0);
    CHECK(salv_slice_span(s, 3, &st, &en) == SALV_STATUS_OUT_OF_RANGE);
    salv_slice_free(s);
    salv_module_free(m);

    CHECK(salv_module_parse("module m(input a, output y); assign y = ; endmodule", NULL, &m) == SALV_STATUS_PARSE_ERROR);
    CHECK(m == NULL);
    CHECK(strstr(salv_last_error(), "E001") != NULL);

    double p = 0;
    CHECK(salv_pass_at_k(5, 2, 3, &p) == SALV_STATUS_OK && p == 0.9);
    CHECK(salv_pass_at_k(3, 4, 1, &p) == SALV_STATUS_DOMAIN_ERROR);

    double wp[] = {-1.0, -2.0}, wr[] = {-3.0, -1.0}, lp[] = {-4.0}, lr[] = {-1.0};
    uint8_t wm[] = {1, 0}, lm[] = {1};
    SalvDpoBatch b = {wp, wr, wm, 2, lp, lr, lm, 1, 0.1};
    double loss, margin, dw[2], dl[1];
    CHECK(salv_dpo_loss(&b, &loss, &margin) == SALV_STATUS_OK);
    CHECK(fabs(margin - 0.5) < 1e-15 && fabs(loss - log1p(exp(-0.5))) < 1e-15);
    CHECK(salv_dpo_grad(&b, dw, dl) == SALV_STATUS_OK);
    CHECK(dw[1] == 0.0 && dw[0] < 0.0 && dl[0] > 0.0);

    const char *cands[] = {"module m(input a, input b, output y); assign y = a | b; endmodule"};
    char *json = NULL;
    CHECK(salv_verify_prompt("module m(input a, input b, output y); assign y = a ^ b; endmodule", cands, 1, 50, 0, &json) == SALV_STATUS_OK);
    CHECK(strstr(json, "\"correct\":false") != NULL);
    salv_string_free(json);

    printf("salvkit %s ok\n", salv_version());
    return 0;
}
