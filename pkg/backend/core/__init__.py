# init file
