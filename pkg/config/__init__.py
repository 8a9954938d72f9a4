# Django config package
