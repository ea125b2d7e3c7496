const char *s = "__global__ void k()";
int use_it() { return s[0]; }
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
